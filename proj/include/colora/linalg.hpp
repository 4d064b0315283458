// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

namespace colora {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Fills eigvals (ascending) and eigvecs (column i of the row-major n x n
// matrix is the eigenvector for eigvals[i]). Throws NumericalError if the
// off-diagonal mass fails to vanish within max_sweeps.
void jacobi_eigh(int n, const std::vector<double>& a, std::vector<double>& eigvals,
                 std::vector<double>& eigvecs, int max_sweeps = 64);

// A = L L^T for symmetric positive-definite A; returns false if a pivot is
// not positive.
bool cholesky(int n, const std::vector<double>& a, std::vector<double>& l);

}  // namespace colora
