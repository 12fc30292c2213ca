#include "elaskit/rng.hpp"

namespace elaskit {

namespace {

// Round constants from the reference Philox-4x64 parameterization.
constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;

// Fixed second key word; the first carries the run seed.
constexpr std::uint64_t kKeyDomain = 0x454C41534B495431ULL;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi,
                    std::uint64_t& lo) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  hi = static_cast<std::uint64_t>(p >> 64);
  lo = static_cast<std::uint64_t>(p);
}

}  // namespace

std::array<std::uint64_t, 4> philox4x64(std::array<std::uint64_t, 4> counter,
                                        std::array<std::uint64_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint64_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, counter[0], hi0, lo0);
    mulhilo(kMul1, counter[2], hi1, lo1);
    counter = {hi1 ^ counter[1] ^ key[0], lo1, hi0 ^ counter[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return counter;
}

std::vector<double> draw(const RngKey& key, int n) {
  if (n < 1) throw std::invalid_argument("draw count must be >= 1");
  std::vector<double> out;
  out.reserve(n);
  const std::array<std::uint64_t, 2> k = {key.seed, kKeyDomain};
  const std::uint64_t lane = (static_cast<std::uint64_t>(key.layer_id) << 32) |
                             key.op_index;
  // block counter starts at 1, matching the reference engine's stream when
  // seeded with a zero block word
  for (std::uint64_t block = 1; static_cast<int>(out.size()) < n; ++block) {
    const auto words = philox4x64({block, key.sample_id, lane, 0}, k);
    for (int i = 0; i < 4 && static_cast<int>(out.size()) < n; ++i)
      out.push_back(static_cast<double>(words[i] >> 11) * 0x1.0p-53);
  }
  return out;
}

StreamStateMap make_stream_map(std::uint64_t seed, int num_slots, int num_stages) {
  StreamStateMap m;
  for (int stage = 1; stage <= num_stages; ++stage) {
    for (int slot = 0; slot < num_slots; ++slot) {
      StreamDescriptor d;
      d.seed = seed;
      d.owner_slot = slot;
      d.owner_stage = stage;
      m.states[{slot, stage}] = d;
    }
  }
  // every slot backs up every peer in the same stage
  for (int slot = 0; slot < num_slots; ++slot)
    for (int peer = 0; peer < num_slots; ++peer)
      if (peer != slot) m.backups[slot].insert(peer);
  return m;
}

StreamStateMap reshard_rng(const StreamStateMap& map,
                           const std::vector<LayerMove>& moves,
                           const std::vector<SampleReassignment>& reassigned) {
  StreamStateMap next = map;
  for (const LayerMove& mv : moves) {
    // keep using the origin stage's streams on the destination stage
    auto it = next.layer_origin_stage.find(mv.layer);
    if (it == next.layer_origin_stage.end())
      next.layer_origin_stage[mv.layer] = mv.src_stage;
    // an already-migrated layer keeps its original provenance
  }
  for (const SampleReassignment& r : reassigned) {
    int origin = r.old_slot;
    auto it = next.sample_origin_slot.find(r.sample_id);
    if (it != next.sample_origin_slot.end()) origin = it->second;
    if (origin != r.new_slot) {
      const auto bslot = next.backups.find(r.new_slot);
      if (bslot == next.backups.end() || !bslot->second.contains(origin))
        throw MissingBackup("slot " + std::to_string(r.new_slot) +
                            " holds no backup of slot " + std::to_string(origin));
    }
    next.sample_origin_slot[r.sample_id] = origin;
  }
  return next;
}

StreamDescriptor resolve_stream(const StreamStateMap& map, std::int64_t sample_id,
                                int current_slot, int layer_id, int current_stage) {
  int slot = current_slot;
  auto sit = map.sample_origin_slot.find(sample_id);
  if (sit != map.sample_origin_slot.end()) slot = sit->second;
  int stage = current_stage;
  auto lit = map.layer_origin_stage.find(layer_id);
  if (lit != map.layer_origin_stage.end()) stage = lit->second;
  auto it = map.states.find({slot, stage});
  if (it == map.states.end())
    throw MissingBackup("no stream descriptor for slot " + std::to_string(slot) +
                        ", stage " + std::to_string(stage));
  return it->second;
}

}  // namespace elaskit
