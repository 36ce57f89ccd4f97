#pragma once

#include "ness/core.hpp"
#include "ness/rng.hpp"

#include <cstdint>
#include <vector>

namespace ness {

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// O(n^3)). Returns col[i] assigned to row i.
std::vector<int> solve_assignment(const Matrix& cost, double* total_cost = nullptr);

/// Exact W2 between two uniform empirical measures with the same number of atoms.
double w2_empirical(const std::vector<StateVector>& a, const std::vector<StateVector>& b);

struct W2Estimate {
  double mean = 0.0;
  double std_error = 0.0;
  int subsample = 0;  // atoms per subsample
  int draws = 0;
};

/// W2 averaged over `draws` random subsamples of at most `max_points` atoms from each side.
W2Estimate w2_subsampled(const std::vector<StateVector>& a, const std::vector<StateVector>& b,
                         int max_points, int draws, const NoiseStream& noise);

}  // namespace ness
