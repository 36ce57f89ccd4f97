#include "ness/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ness {

std::vector<int> solve_assignment(const Matrix& cost, double* total_cost) {
  require(cost.rows() == cost.cols(), "solve_assignment: cost matrix must be square");
  const int n = static_cast<int>(cost.rows());
  if (n == 0) {
    if (total_cost) *total_cost = 0.0;
    return {};
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  // potentials u (rows), v (cols); p[j] = row matched to column j, 1-based
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col(n);
  for (int j = 1; j <= n; ++j) col[p[j] - 1] = j - 1;
  if (total_cost) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += cost(i, col[i]);
    *total_cost = s;
  }
  return col;
}

double w2_empirical(const std::vector<StateVector>& a, const std::vector<StateVector>& b) {
  require(a.size() == b.size() && !a.empty(), "w2_empirical: need equal, nonzero atom counts");
  const auto n = static_cast<Eigen::Index>(a.size());
  Matrix cost(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) cost(i, j) = (a[i] - b[j]).squaredNorm();
  double total = 0.0;
  solve_assignment(cost, &total);
  return std::sqrt(std::max(0.0, total) / static_cast<double>(n));
}

namespace {

std::vector<StateVector> subsample(const std::vector<StateVector>& pts, int m,
                                   const NoiseStream& noise, std::uint64_t draw,
                                   std::uint64_t side) {
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  // partial Fisher-Yates
  for (int i = 0; i < m; ++i) {
    const double u = noise.uniform(draw, static_cast<std::uint64_t>(i), NoiseStream::kExtra, side);
    const auto span = idx.size() - static_cast<std::size_t>(i);
    const auto j = static_cast<std::size_t>(i) +
                   std::min(span - 1, static_cast<std::size_t>(u * static_cast<double>(span)));
    std::swap(idx[i], idx[j]);
  }
  std::vector<StateVector> out;
  out.reserve(m);
  for (int i = 0; i < m; ++i) out.push_back(pts[idx[i]]);
  return out;
}

}  // namespace

W2Estimate w2_subsampled(const std::vector<StateVector>& a, const std::vector<StateVector>& b,
                         int max_points, int draws, const NoiseStream& noise) {
  require(!a.empty() && !b.empty(), "w2_subsampled: empty measure");
  require(max_points >= 1 && draws >= 1, "w2_subsampled: invalid subsample budget");
  W2Estimate est;
  est.subsample = static_cast<int>(std::min({a.size(), b.size(), static_cast<std::size_t>(max_points)}));
  est.draws = draws;
  std::vector<double> vals(draws);
  for (int k = 0; k < draws; ++k)
    vals[k] = w2_empirical(subsample(a, est.subsample, noise, k, 0),
                           subsample(b, est.subsample, noise, k, 1));
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= draws;
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  est.mean = mean;
  est.std_error = draws > 1 ? std::sqrt(var / (draws - 1) / draws) : 0.0;
  return est;
}

}  // namespace ness
