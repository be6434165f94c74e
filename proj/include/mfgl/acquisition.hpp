#pragma once

#include "mfgl/core_types.hpp"
#include "mfgl/parallel.hpp"
#include "mfgl/random.hpp"
#include "mfgl/spectral.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace mfgl {

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
};

struct KMeansResult {
  Matrix centroids;                // M x m
  std::vector<Index> assignment;   // length N
  double wcss = 0.0;               // within-cluster sum of squares
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline Matrix kmeans_plus_plus(const Matrix& pts, Index k, Rng& rng) {
  const Index n = pts.rows();
  Matrix centers(k, pts.cols());
  std::vector<bool> chosen(static_cast<std::size_t>(n), false);
  Index first = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
  centers.row(0) = pts.row(first);
  chosen[static_cast<std::size_t>(first)] = true;
  Vector d2 = (pts.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    Index pick = -1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (d2(i) > 0.0 && acc > target) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {
        for (Index i = n - 1; i >= 0; --i)
          if (d2(i) > 0.0) {
            pick = i;
            break;
          }
      }
    } else {
      for (Index i = 0; i < n; ++i)
        if (!chosen[static_cast<std::size_t>(i)]) {
          pick = i;
          break;
        }
    }
    chosen[static_cast<std::size_t>(pick)] = true;
    centers.row(c) = pts.row(pick);
    d2 = d2.cwiseMin((pts.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }
  return centers;
}

inline KMeansResult lloyd(const Matrix& pts, Matrix centers, int max_iterations) {
  const Index n = pts.rows();
  const Index k = centers.rows();
  std::vector<Index> assign(static_cast<std::size_t>(n), -1);
  Vector dist(n);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (Index c = 0; c < k; ++c) {
        const double d = (pts.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      dist(i) = best_d;
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    // Empty clusters take the point farthest from its centroid.
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (Index i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Index far = -1;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        if (counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] <= 1) continue;
        if (dist(i) > far_d) {
          far_d = dist(i);
          far = i;
        }
      }
      if (far < 0) continue;
      --counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(far)])];
      assign[static_cast<std::size_t>(far)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      dist(far) = 0.0;
      changed = true;
    }
    Matrix sums = Matrix::Zero(k, pts.cols());
    for (Index i = 0; i < n; ++i) sums.row(assign[static_cast<std::size_t>(i)]) += pts.row(i);
    for (Index c = 0; c < k; ++c)
      centers.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    if (!changed && iter > 0) break;
  }
  KMeansResult r;
  r.wcss = 0.0;
  for (Index i = 0; i < n; ++i)
    r.wcss += (pts.row(i) - centers.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
  r.centroids = std::move(centers);
  r.assignment = std::move(assign);
  return r;
}

}  // namespace detail

/// Lloyd's algorithm from k-means++ seeds; the best of several restarts by
/// within-cluster sum of squares (lowest restart index on ties).
inline KMeansResult kmeans(const Matrix& points, Index k, std::uint64_t seed,
                           const KMeansOptions& opt = {}) {
  detail::require(k >= 1 && k <= points.rows(), ErrorCode::InvalidArgument,
                  "k-means needs 1 <= M <= N");
  detail::require(points.allFinite(), ErrorCode::NonFiniteInput, "k-means input not finite");
  const int restarts = std::max(1, opt.restarts);
  std::vector<KMeansResult> runs(static_cast<std::size_t>(restarts));
  parallel_for(
      0, restarts,
      [&](std::ptrdiff_t r) {
        Rng rng(detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(r))));
        runs[static_cast<std::size_t>(r)] =
            detail::lloyd(points, detail::kmeans_plus_plus(points, k, rng), opt.max_iterations);
      },
      1);
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r)
    if (runs[r].wcss < runs[best].wcss) best = r;
  return std::move(runs[best]);
}

/// Which points receive high-fidelity evaluation and how the dataset is
/// re-indexed so they come first.
struct AcquisitionPlan {
  std::vector<Index> selected_indices;
  std::vector<Index> permutation;  // new row k holds original row permutation[k]
  Matrix centroids;
  std::vector<Index> cluster_assignment;
  std::uint64_t seed = 0;
  Index embed_dim = 0;

  Index n() const noexcept { return static_cast<Index>(permutation.size()); }
  Index m() const noexcept { return static_cast<Index>(selected_indices.size()); }
};

inline AcquisitionPlan plan_acquisition(const Spectrum& spectrum, Index m, std::uint64_t seed,
                                        std::optional<Index> embed_dim = std::nullopt,
                                        const KMeansOptions& opt = {}) {
  const Index n = spectrum.points();
  detail::require(m >= 1 && m <= n, ErrorCode::InvalidArgument, "need 1 <= M <= N");
  if (spectrum.size() < m)
    throw Error(ErrorCode::InsufficientSpectrum,
                "spectrum has " + std::to_string(spectrum.size()) + " pairs, need M = " +
                    std::to_string(m));
  const Index dim = embed_dim.value_or(m);
  const Matrix coords = embed(spectrum, dim);
  KMeansResult km = kmeans(coords, m, seed, opt);

  AcquisitionPlan plan;
  plan.seed = seed;
  plan.embed_dim = dim;
  for (Index c = 0; c < m; ++c) {
    Index best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < n; ++i) {
      if (km.assignment[static_cast<std::size_t>(i)] != c) continue;
      const double d = (coords.row(i) - km.centroids.row(c)).norm();
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    if (best < 0)
      throw Error(ErrorCode::ConvergenceFailure, "k-means produced an empty cluster", c);
    plan.selected_indices.push_back(best);
  }
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  for (Index i : plan.selected_indices) {
    taken[static_cast<std::size_t>(i)] = true;
    plan.permutation.push_back(i);
  }
  for (Index i = 0; i < n; ++i)
    if (!taken[static_cast<std::size_t>(i)]) plan.permutation.push_back(i);
  plan.centroids = std::move(km.centroids);
  plan.cluster_assignment = std::move(km.assignment);
  return plan;
}

inline std::vector<Index> inverse_permutation(const std::vector<Index>& perm) {
  std::vector<Index> inv(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) inv[static_cast<std::size_t>(perm[k])] = static_cast<Index>(k);
  return inv;
}

inline bool is_permutation_of_range(const std::vector<Index>& perm) {
  std::vector<Index> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t k = 0; k < sorted.size(); ++k)
    if (sorted[k] != static_cast<Index>(k)) return false;
  return true;
}

inline Matrix permute_rows(const Matrix& m, const std::vector<Index>& perm) {
  detail::require(static_cast<Index>(perm.size()) == m.rows(), ErrorCode::RowCountMismatch,
                  "permutation length does not match row count");
  Matrix out(m.rows(), m.cols());
  for (std::size_t k = 0; k < perm.size(); ++k) out.row(static_cast<Index>(k)) = m.row(perm[k]);
  return out;
}

/// Re-indexes rows (and parameter ids). High-fidelity rows are attached only
/// after re-indexing, so a dataset that already carries them is rejected.
inline Dataset apply_permutation(const Dataset& data, const std::vector<Index>& perm) {
  detail::require(static_cast<Index>(perm.size()) == data.n(), ErrorCode::RowCountMismatch,
                  "permutation size does not match dataset");
  detail::require(is_permutation_of_range(perm), ErrorCode::InvalidArgument,
                  "not a permutation of 0..N-1");
  detail::require(!data.hf(), ErrorCode::InvalidArgument,
                  "attach high-fidelity rows after re-indexing");
  std::optional<std::vector<std::string>> ids;
  if (data.param_ids()) {
    ids.emplace();
    for (Index i : perm) ids->push_back((*data.param_ids())[static_cast<std::size_t>(i)]);
  }
  return Dataset(permute_rows(data.lf(), perm), std::nullopt, std::move(ids));
}

inline Dataset apply_permutation(const Dataset& data, const AcquisitionPlan& plan) {
  return apply_permutation(data, plan.permutation);
}

inline nlohmann::json to_json(const AcquisitionPlan& plan) {
  nlohmann::json j;
  j["format"] = "mfgl-plan";
  j["version"] = 1;
  j["n"] = plan.n();
  j["m"] = plan.m();
  j["seed"] = plan.seed;
  j["embed_dim"] = plan.embed_dim;
  j["selected_indices"] = plan.selected_indices;
  j["permutation"] = plan.permutation;
  j["cluster_assignment"] = plan.cluster_assignment;
  nlohmann::json centroids = nlohmann::json::array();
  for (Index c = 0; c < plan.centroids.rows(); ++c) {
    std::vector<double> row(static_cast<std::size_t>(plan.centroids.cols()));
    for (Index d = 0; d < plan.centroids.cols(); ++d) row[static_cast<std::size_t>(d)] = plan.centroids(c, d);
    centroids.push_back(row);
  }
  j["centroids"] = centroids;
  return j;
}

inline AcquisitionPlan plan_from_json(const nlohmann::json& j) {
  try {
    AcquisitionPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.embed_dim = j.at("embed_dim").get<Index>();
    plan.selected_indices = j.at("selected_indices").get<std::vector<Index>>();
    plan.permutation = j.at("permutation").get<std::vector<Index>>();
    plan.cluster_assignment = j.value("cluster_assignment", std::vector<Index>{});
    if (j.contains("centroids")) {
      const auto& rows = j.at("centroids");
      const Index k = static_cast<Index>(rows.size());
      const Index d = k > 0 ? static_cast<Index>(rows.at(0).size()) : 0;
      plan.centroids.resize(k, d);
      for (Index c = 0; c < k; ++c)
        for (Index e = 0; e < d; ++e)
          plan.centroids(c, e) = rows.at(static_cast<std::size_t>(c)).at(static_cast<std::size_t>(e)).get<double>();
    }
    detail::require(is_permutation_of_range(plan.permutation), ErrorCode::FileFormat,
                    "plan permutation is not a bijection");
    for (std::size_t k = 0; k < plan.selected_indices.size(); ++k)
      detail::require(k < plan.permutation.size() && plan.permutation[k] == plan.selected_indices[k],
                      ErrorCode::FileFormat, "plan permutation does not lead with the selection");
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::FileFormat, std::string("malformed plan: ") + e.what());
  }
}

}  // namespace mfgl
