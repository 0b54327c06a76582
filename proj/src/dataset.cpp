#include "vnas/dataset.hpp"

#include <cmath>
#include <cstring>
#include <ostream>
#include <sstream>
#include <utility>

#include "vnas/common.hpp"
#include "vnas/serialization.hpp"

namespace vnas {

namespace {

constexpr char kMagic[4] = {'V', 'N', 'B', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::int64_t kMaxTransitions = std::int64_t{1} << 31;
constexpr int kMinImageSize = 4;
constexpr int kMaxImageSize = 4096;

// doubles per canonical record: two states (3S^2 raster + 2 scalars each),
// the 7 action fields, reward, done flag.
std::size_t record_doubles(int image_size) {
  const std::size_t s2 = static_cast<std::size_t>(image_size) * image_size;
  return 6 * s2 + 13;
}

// One transition flattened to fp64 in fixed order. The buffer hash and the
// file format both use this layout, so "hash unchanged" and "file
// round-trips byte-identically" are the same statement.
void fill_record(const Transition& t, int image_size,
                 std::vector<double>* out) {
  out->clear();
  const auto put_state = [&](const GraspState& s) {
    out->insert(out->end(), s.image.begin(), s.image.end());
    out->push_back(static_cast<double>(s.gripper_state));
    out->push_back(s.height);
  };
  put_state(t.s);
  const auto a = t.a.flat();
  out->insert(out->end(), a.begin(), a.end());
  out->push_back(t.r);
  put_state(t.s_next);
  out->push_back(t.done ? 1.0 : 0.0);
  VNAS_CHECK(out->size() == record_doubles(image_size), ShapeError,
             "transition does not match the declared image size");
}

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(const std::string& bytes, std::size_t* off) {
  VNAS_CHECK(*off + sizeof(T) <= bytes.size(), IoError,
             "dataset file truncated");
  T v;
  std::memcpy(&v, bytes.data() + *off, sizeof(T));
  *off += sizeof(T);
  return v;
}

double take_double(const std::vector<double>& rec, std::size_t* i) {
  return rec[(*i)++];
}

// Strict per-field decode of one stored record back into a transition.
// Anything off the valid manifold means the file was not written by us.
Transition decode_record(const std::vector<double>& rec, int image_size) {
  const std::size_t s2 = static_cast<std::size_t>(image_size) * image_size;
  Transition t;
  std::size_t i = 0;
  const auto take_state = [&](GraspState* s) {
    s->image.assign(rec.begin() + static_cast<std::ptrdiff_t>(i),
                    rec.begin() + static_cast<std::ptrdiff_t>(i + 3 * s2));
    i += 3 * s2;
    for (double v : s->image)
      VNAS_CHECK(std::isfinite(v) && v >= 0.0 && v <= 1.0, IoError,
                 "dataset file corrupt: pixel out of range");
    const double g = take_double(rec, &i);
    VNAS_CHECK(g == 0.0 || g == 1.0, IoError,
               "dataset file corrupt: gripper state not a flag");
    s->gripper_state = static_cast<int>(g);
    s->height = take_double(rec, &i);
    VNAS_CHECK(std::isfinite(s->height) && s->height >= 0.0 &&
                   s->height <= 1.0,
               IoError, "dataset file corrupt: height out of range");
  };
  take_state(&t.s);
  std::array<double, kActionFlatDim> a{};
  for (double& v : a) v = take_double(rec, &i);
  try {
    t.a = GraspAction::from_flat(a);
  } catch (const Error& e) {
    throw IoError(std::string("dataset file corrupt: ") + e.what());
  }
  t.r = take_double(rec, &i);
  VNAS_CHECK(std::isfinite(t.r), IoError,
             "dataset file corrupt: non-finite reward");
  take_state(&t.s_next);
  const double d = take_double(rec, &i);
  VNAS_CHECK(d == 0.0 || d == 1.0, IoError,
             "dataset file corrupt: done not a flag");
  t.done = d == 1.0;
  return t;
}

}  // namespace

ReplayBuffer::ReplayBuffer(std::vector<Transition> transitions,
                           DatasetStats stats, int image_size)
    : transitions_(std::move(transitions)),
      stats_(stats),
      image_size_(image_size) {
  VNAS_CHECK(image_size_ >= kMinImageSize && image_size_ <= kMaxImageSize,
             ValueError, "image size out of range");
  VNAS_CHECK(!transitions_.empty(), ValueError, "dataset is empty");
  VNAS_CHECK(stats_.transitions == size(), ValueError,
             "stats transition count does not match the buffer");
  VNAS_CHECK(stats_.episodes >= 1 && stats_.episodes <= size(), ValueError,
             "stats episode count impossible for this buffer");
  VNAS_CHECK(stats_.success_fraction >= 0.0 && stats_.success_fraction <= 1.0,
             ValueError, "success fraction out of range");
  const std::size_t expect = 3 * static_cast<std::size_t>(image_size_) *
                             static_cast<std::size_t>(image_size_);
  std::vector<double> rec;
  rec.reserve(record_doubles(image_size_));
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Transition& t : transitions_) {
    VNAS_CHECK(t.s.image.size() == expect && t.s_next.image.size() == expect,
               ShapeError, "transition image does not match image size");
    fill_record(t, image_size_, &rec);
    h = fnv1a(rec.data(), rec.size() * sizeof(double), h);
  }
  hash_ = h;
}

const Transition& ReplayBuffer::at(std::int64_t i) const {
  VNAS_CHECK(i >= 0 && i < size(), ValueError,
             "transition index out of range");
  return transitions_[static_cast<std::size_t>(i)];
}

std::vector<std::int64_t> ReplayBuffer::sample_indices(Rng& rng,
                                                       int batch) const {
  VNAS_CHECK(batch > 0, ValueError, "batch size must be positive");
  std::vector<std::int64_t> idx(static_cast<std::size_t>(batch));
  for (auto& v : idx)
    v = static_cast<std::int64_t>(
        rng.uniform_int(static_cast<std::uint64_t>(size())));
  return idx;
}

ReplayBuffer generate_dataset(const EnvConfig& env_cfg,
                              std::int64_t n_episodes, double expert_fraction,
                              double noise, std::uint64_t seed) {
  env_cfg.validate();
  VNAS_CHECK(n_episodes > 0, ValueError, "episode count must be positive");
  VNAS_CHECK(expert_fraction >= 0.0 && expert_fraction <= 1.0, ValueError,
             "expert fraction must be in [0, 1]");
  VNAS_CHECK(std::isfinite(noise) && noise >= 0.0, ValueError,
             "expert noise must be finite and non-negative");

  // Sub-master for this dataset; per-episode env and policy streams hang off
  // it by counter, so episode k's rollout never depends on how many episodes
  // run, which thread runs it, or what any other subsystem drew.
  const std::uint64_t data_seed = derive_seed(seed, Stream::kData);
  const std::int64_t n_expert =
      std::llround(expert_fraction * static_cast<double>(n_episodes));

  std::vector<std::vector<Transition>> per_episode(
      static_cast<std::size_t>(n_episodes));
  std::vector<char> success(static_cast<std::size_t>(n_episodes), 0);

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t ep = 0; ep < n_episodes; ++ep) {
    Rng env_rng(
        derive_seed(data_seed, Stream::kEnv, static_cast<std::uint64_t>(ep)));
    Rng pol_rng(derive_seed(data_seed, Stream::kSample,
                            static_cast<std::uint64_t>(ep)));
    GraspEnv env(env_cfg, env_rng);
    const bool expert = ep < n_expert;
    auto& out = per_episode[static_cast<std::size_t>(ep)];
    while (!env.done()) {
      const GraspAction a = expert ? env.expert_action(noise, pol_rng)
                                   : random_grasp_action(pol_rng);
      GraspState s = env.state();
      StepResult res = env.step(a);
      out.push_back(
          Transition{std::move(s), a, res.reward, std::move(res.state),
                     res.done});
    }
    success[static_cast<std::size_t>(ep)] = env.succeeded() ? 1 : 0;
  }

  std::int64_t total = 0, successes = 0;
  for (std::int64_t ep = 0; ep < n_episodes; ++ep) {
    total += static_cast<std::int64_t>(
        per_episode[static_cast<std::size_t>(ep)].size());
    successes += success[static_cast<std::size_t>(ep)];
  }
  std::vector<Transition> all;
  all.reserve(static_cast<std::size_t>(total));
  for (auto& ep : per_episode)
    for (auto& t : ep) all.push_back(std::move(t));

  DatasetStats stats;
  stats.episodes = n_episodes;
  stats.transitions = total;
  stats.success_fraction =
      static_cast<double>(successes) / static_cast<double>(n_episodes);
  stats.seed = seed;
  log_info("dataset: " + std::to_string(total) + " transitions from " +
           std::to_string(n_episodes) + " episodes, success fraction " +
           format_double(stats.success_fraction));
  return ReplayBuffer(std::move(all), stats, env_cfg.image_size);
}

void save_dataset(const std::string& path, const ReplayBuffer& buffer) {
  atomic_write_file(path, [&](std::ostream& os) {
    os.write(kMagic, sizeof(kMagic));
    write_raw(os, kVersion);
    write_raw(os, static_cast<std::uint32_t>(buffer.image_size()));
    write_raw(os, static_cast<std::uint64_t>(buffer.size()));
    write_raw(os, static_cast<std::uint64_t>(buffer.stats().episodes));
    write_raw(os, buffer.stats().success_fraction);
    write_raw(os, buffer.stats().seed);
    std::vector<double> rec;
    rec.reserve(record_doubles(buffer.image_size()));
    for (std::int64_t i = 0; i < buffer.size(); ++i) {
      fill_record(buffer.at(i), buffer.image_size(), &rec);
      os.write(reinterpret_cast<const char*>(rec.data()),
               static_cast<std::streamsize>(rec.size() * sizeof(double)));
    }
  });
}

ReplayBuffer load_dataset(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  std::size_t off = 0;
  VNAS_CHECK(bytes.size() >= sizeof(kMagic) &&
                 std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0,
             IoError, "not a dataset file: " + path);
  off += sizeof(kMagic);
  const auto version = read_raw<std::uint32_t>(bytes, &off);
  VNAS_CHECK(version == kVersion, IoError,
             "unsupported dataset version " + std::to_string(version));
  const auto image_size = read_raw<std::uint32_t>(bytes, &off);
  VNAS_CHECK(image_size >= static_cast<std::uint32_t>(kMinImageSize) &&
                 image_size <= static_cast<std::uint32_t>(kMaxImageSize),
             IoError, "dataset file corrupt: image size out of range");
  const auto count = read_raw<std::uint64_t>(bytes, &off);
  VNAS_CHECK(count >= 1 && count <= static_cast<std::uint64_t>(kMaxTransitions),
             IoError, "dataset file corrupt: transition count out of range");
  const auto episodes = read_raw<std::uint64_t>(bytes, &off);
  const auto success_fraction = read_raw<double>(bytes, &off);
  const auto seed = read_raw<std::uint64_t>(bytes, &off);

  const std::size_t nrec = record_doubles(static_cast<int>(image_size));
  const std::size_t body = static_cast<std::size_t>(count) * nrec *
                           sizeof(double);
  VNAS_CHECK(bytes.size() == off + body, IoError,
             "dataset file truncated or has trailing bytes");

  std::vector<Transition> transitions;
  transitions.reserve(static_cast<std::size_t>(count));
  std::vector<double> rec(nrec);
  for (std::uint64_t i = 0; i < count; ++i) {
    std::memcpy(rec.data(), bytes.data() + off, nrec * sizeof(double));
    off += nrec * sizeof(double);
    transitions.push_back(decode_record(rec, static_cast<int>(image_size)));
  }

  DatasetStats stats;
  stats.episodes = static_cast<std::int64_t>(episodes);
  stats.transitions = static_cast<std::int64_t>(count);
  stats.success_fraction = success_fraction;
  stats.seed = seed;
  return ReplayBuffer(std::move(transitions), stats,
                      static_cast<int>(image_size));
}

}  // namespace vnas
