#include "vnas/cem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "vnas/common.hpp"
#include "vnas/tensor.hpp"

namespace vnas {

namespace {

// Neutral starting mean: no translation, identity rotation, and an
// undecided gripper command right on the argmax boundary.
constexpr double kInitMean[kActionFlatDim] = {0, 0, 0, 0, 1, 0.5, 0.5};

// Repeats each row of a batched tensor `copies` times (row-major: all copies
// of row 0, then row 1, ...).
Tensor tile_rows(const Tensor& t, int copies) {
  const std::int64_t n = t.dim(0);
  const std::int64_t per = t.numel() / n;
  Shape shape = t.shape();
  shape[0] = n * copies;
  std::vector<double> data(static_cast<std::size_t>(per) * n * copies);
  for (std::int64_t u = 0; u < n; ++u) {
    const double* src = t.data() + u * per;
    for (int c = 0; c < copies; ++c)
      std::copy(src, src + per,
                data.data() + static_cast<std::size_t>(u * copies + c) * per);
  }
  return Tensor::from_data(std::move(shape), std::move(data));
}

Tensor slice_row(const Tensor& t, std::int64_t row) {
  const std::int64_t per = t.numel() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = 1;
  const double* src = t.data() + row * per;
  return Tensor::from_data(std::move(shape),
                           std::vector<double>(src, src + per));
}

// The lockstep core: `searches` independent Gaussian fits advance one
// iteration at a time; the scorer sees all searches*population projected
// candidates of an iteration as one batch (search-major rows).
std::vector<GraspAction> cem_core(const ActionScorer& score, int searches,
                                  const CemConfig& cfg,
                                  const std::vector<Rng*>& rngs) {
  cfg.validate();
  VNAS_CHECK(searches >= 1, ValueError, "cem needs at least one search");
  VNAS_CHECK(static_cast<int>(rngs.size()) == searches, ValueError,
             "cem needs one rng per search");
  const int pop = cfg.population;
  const int elite = std::min<int>(
      pop, std::max<int>(
               1, static_cast<int>(std::llround(cfg.elite_fraction * pop))));

  std::vector<std::array<double, kActionFlatDim>> mean(
      static_cast<std::size_t>(searches));
  std::vector<std::array<double, kActionFlatDim>> stddev(
      static_cast<std::size_t>(searches));
  for (int u = 0; u < searches; ++u) {
    std::copy(std::begin(kInitMean), std::end(kInitMean), mean[u].begin());
    stddev[u].fill(cfg.init_stddev);
  }

  const std::size_t rows = static_cast<std::size_t>(searches) * pop;
  std::vector<double> flat(rows * kActionFlatDim);
  std::vector<double> scores(rows);
  std::vector<int> order(static_cast<std::size_t>(pop));

  for (int it = 0; it < cfg.iterations; ++it) {
    for (int u = 0; u < searches; ++u) {
      for (int p = 0; p < pop; ++p) {
        double raw[kActionFlatDim];
        for (int d = 0; d < kActionFlatDim; ++d)
          raw[d] = mean[u][d] + stddev[u][d] * rngs[u]->normal();
        // optimize over reachable actions only: project before scoring
        const auto a = project_action(raw).flat();
        std::copy(a.begin(), a.end(),
                  flat.begin() +
                      (static_cast<std::size_t>(u) * pop + p) * kActionFlatDim);
      }
    }
    score(flat.data(), static_cast<int>(rows), scores.data());
    for (double s : scores)
      VNAS_CHECK(std::isfinite(s), ValueError,
                 "cem scorer produced a non-finite value");

    for (int u = 0; u < searches; ++u) {
      const double* sflat =
          flat.data() + static_cast<std::size_t>(u) * pop * kActionFlatDim;
      const double* sscore = scores.data() + static_cast<std::size_t>(u) * pop;
      std::iota(order.begin(), order.end(), 0);
      // stable sort so score ties resolve by sample index, not libc
      // internals
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return sscore[a] > sscore[b]; });
      for (int d = 0; d < kActionFlatDim; ++d) {
        double m = 0.0;
        for (int e = 0; e < elite; ++e)
          m += sflat[static_cast<std::size_t>(order[e]) * kActionFlatDim + d];
        m /= elite;
        double v = 0.0;
        for (int e = 0; e < elite; ++e) {
          const double dx =
              sflat[static_cast<std::size_t>(order[e]) * kActionFlatDim + d] -
              m;
          v += dx * dx;
        }
        mean[u][d] = m;
        stddev[u][d] = std::sqrt(v / elite + cfg.var_reg);
      }
    }
  }

  std::vector<GraspAction> out;
  out.reserve(static_cast<std::size_t>(searches));
  for (int u = 0; u < searches; ++u)
    out.push_back(project_action(mean[u].data()));
  return out;
}

}  // namespace

void CemConfig::validate() const {
  VNAS_CHECK(population >= 1, ConfigError, "cem population must be >= 1");
  VNAS_CHECK(iterations >= 1, ConfigError, "cem iterations must be >= 1");
  VNAS_CHECK(elite_fraction > 0.0 && elite_fraction <= 1.0, ConfigError,
             "cem elite fraction must be in (0, 1]");
  VNAS_CHECK(std::isfinite(init_stddev) && init_stddev > 0.0, ConfigError,
             "cem init stddev must be positive");
  VNAS_CHECK(std::isfinite(var_reg) && var_reg >= 0.0, ConfigError,
             "cem variance regularizer must be non-negative");
}

GraspAction cem_maximize(const ActionScorer& score, const CemConfig& cfg,
                         Rng& rng) {
  return cem_core(score, 1, cfg, {&rng})[0];
}

std::vector<GraspAction> cem_maximize_batch(
    const QNetwork& q, const TrunkOut& trunk,
    const std::vector<const GraspState*>& states, const CemConfig& cfg,
    const std::vector<Rng*>& rngs) {
  cfg.validate();
  const int searches = static_cast<int>(states.size());
  VNAS_CHECK(q.config().action_dim == kNetActionDim, ShapeError,
             "network action dim does not match the action encoding");
  VNAS_CHECK(searches >= 1, ValueError, "cem needs at least one search");
  VNAS_CHECK(trunk.x.defined() && trunk.x.dim(0) == searches, ShapeError,
             "trunk batch does not match the state count");
  for (const GraspState* s : states)
    VNAS_CHECK(s != nullptr, ValueError, "null state in cem batch");
  NoGradScope ng;

  TrunkOut tiled;
  tiled.x = tile_rows(trunk.x, cfg.population);
  tiled.dil_gaps.resize(trunk.dil_gaps.size());
  for (std::size_t i = 0; i < trunk.dil_gaps.size(); ++i)
    if (trunk.dil_gaps[i].defined())
      tiled.dil_gaps[i] = tile_rows(trunk.dil_gaps[i], cfg.population);

  const int pop = cfg.population;
  return cem_core(
      [&](const double* flat, int n, double* out) {
        std::vector<double> acts(static_cast<std::size_t>(n) * kNetActionDim);
        for (int i = 0; i < n; ++i) {
          const GraspState& s = *states[static_cast<std::size_t>(i / pop)];
          double* dst =
              acts.data() + static_cast<std::size_t>(i) * kNetActionDim;
          std::copy(flat + static_cast<std::size_t>(i) * kActionFlatDim,
                    flat + static_cast<std::size_t>(i + 1) * kActionFlatDim,
                    dst);
          dst[kActionFlatDim] = static_cast<double>(s.gripper_state);
          dst[kActionFlatDim + 1] = s.height;
        }
        const Tensor qv = q.tail(
            tiled, Tensor::from_data({n, kNetActionDim}, std::move(acts)));
        std::copy(qv.data(), qv.data() + n, out);
      },
      searches, cfg, rngs);
}

GraspAction cem_maximize_tail(const QNetwork& q, const TrunkOut& trunk,
                              std::int64_t row, const GraspState& s,
                              const CemConfig& cfg, Rng& rng) {
  VNAS_CHECK(trunk.x.defined() && row >= 0 && row < trunk.x.dim(0), ValueError,
             "trunk row out of range");
  TrunkOut one;
  one.x = slice_row(trunk.x, row);
  one.dil_gaps.resize(trunk.dil_gaps.size());
  for (std::size_t i = 0; i < trunk.dil_gaps.size(); ++i)
    if (trunk.dil_gaps[i].defined())
      one.dil_gaps[i] = slice_row(trunk.dil_gaps[i], row);
  return cem_maximize_batch(q, one, {&s}, cfg, {&rng})[0];
}

GraspAction cem_maximize_q(const QNetwork& q, const GraspState& s,
                           const CemConfig& cfg, Rng& rng) {
  const auto& nc = q.config();
  VNAS_CHECK(static_cast<int>(s.image.size()) ==
                 nc.image_size * nc.image_size * nc.image_channels,
             ShapeError, "state image does not match the network config");
  NoGradScope ng;
  const TrunkOut t = q.trunk(Tensor::from_data(
      {1, nc.image_size, nc.image_size, nc.image_channels},
      std::vector<double>(s.image.begin(), s.image.end())));
  return cem_maximize_tail(q, t, 0, s, cfg, rng);
}

}  // namespace vnas
