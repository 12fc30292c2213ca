#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "elaskit/graph_planner.hpp"

namespace elaskit {

// Counter-based keyed generator (Philox-4x64, 10 rounds). Stateless: a key
// fully determines the stream, so "transferring RNG state" between ranks is a
// metadata copy and elastic runs can replay the exact randomness of a static
// run.
std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> counter,
                                        std::array<std::uint64_t, 2> key);

struct RngKey {
  std::uint64_t seed = 0;
  std::uint64_t sample_id = 0;
  std::uint32_t layer_id = 0;
  std::uint32_t op_index = 0;
};

// n uniforms in [0,1), bit-exact across platforms for a given key.
std::vector<double> draw(const RngKey& key, int n);

struct MissingBackup final : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Stream descriptor R^t_{dp,pp}: identity of the logical stream owned by a
// (dp-slot, pp-stage) cell. The generator is keyed functionally, so the
// descriptor carries provenance rather than buffered state.
struct StreamDescriptor {
  std::uint64_t seed = 0;
  int owner_slot = -1;
  int owner_stage = -1;
  std::uint64_t counter_base = 0;

  bool operator==(const StreamDescriptor&) const = default;
};

struct StreamStateMap {
  // (dp-slot, pp-stage) -> descriptor, as initially owned.
  std::map<std::pair<int, int>, StreamDescriptor> states;
  // slot -> peer slots whose descriptors it holds. Every slot backs up all
  // peers in its stage; resharded samples resolve through these.
  std::map<int, std::set<int>> backups;
  // layer -> stage whose streams the layer keeps using after migration.
  std::map<int, int> layer_origin_stage;
  // sample -> slot whose stream the sample keeps using after reassignment.
  std::map<std::int64_t, int> sample_origin_slot;
};

StreamStateMap make_stream_map(std::uint64_t seed, int num_slots, int num_stages);

struct SampleReassignment {
  std::int64_t sample_id;
  int old_slot;
  int new_slot;
};

// Applies layer moves and sample reassignments. Migrated layers resolve to
// their origin-stage descriptors; reassigned samples resolve through the new
// slot's backup of the old slot's descriptor. Throws MissingBackup when a
// required peer descriptor was never backed up.
StreamStateMap reshard_rng(const StreamStateMap& map,
                           const std::vector<LayerMove>& moves,
                           const std::vector<SampleReassignment>& reassigned);

// Resolves the stream a (sample, layer) pair must use when executed by
// (current_slot, current_stage). Total after reshard_rng by construction.
StreamDescriptor resolve_stream(const StreamStateMap& map, std::int64_t sample_id,
                                int current_slot, int layer_id, int current_stage);

}  // namespace elaskit
