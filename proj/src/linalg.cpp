// SPDX-License-Identifier: Apache-2.0
#include "colora/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "colora/common.hpp"

namespace colora {

void jacobi_eigh(int n, const std::vector<double>& a_in, std::vector<double>& eigvals,
                 std::vector<double>& eigvecs, int max_sweeps) {
    if (static_cast<int>(a_in.size()) != n * n) throw ValueError("jacobi_eigh: bad matrix size");
    std::vector<double> a = a_in;
    std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * n + i] = 1.0;

    auto off_norm = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += a[static_cast<std::size_t>(i) * n + j] * a[static_cast<std::size_t>(i) * n + j];
        return std::sqrt(2.0 * s);
    };
    double scale = 0.0;
    for (double x : a) scale = std::max(scale, std::fabs(x));
    double tol = (scale > 0 ? scale : 1.0) * 1e-14 * n;

    int sweep = 0;
    while (off_norm() > tol) {
        if (++sweep > max_sweeps) throw NumericalError("jacobi_eigh did not converge");
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a[static_cast<std::size_t>(p) * n + q];
                if (std::fabs(apq) <= tol * 1e-3) continue;
                double app = a[static_cast<std::size_t>(p) * n + p];
                double aqq = a[static_cast<std::size_t>(q) * n + q];
                double tau = (aqq - app) / (2.0 * apq);
                double t = (tau >= 0 ? 1.0 : -1.0) / (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = t * c;
                for (int i = 0; i < n; ++i) {
                    double aip = a[static_cast<std::size_t>(i) * n + p];
                    double aiq = a[static_cast<std::size_t>(i) * n + q];
                    a[static_cast<std::size_t>(i) * n + p] = c * aip - s * aiq;
                    a[static_cast<std::size_t>(i) * n + q] = s * aip + c * aiq;
                }
                for (int j = 0; j < n; ++j) {
                    double apj = a[static_cast<std::size_t>(p) * n + j];
                    double aqj = a[static_cast<std::size_t>(q) * n + j];
                    a[static_cast<std::size_t>(p) * n + j] = c * apj - s * aqj;
                    a[static_cast<std::size_t>(q) * n + j] = s * apj + c * aqj;
                }
                for (int i = 0; i < n; ++i) {
                    double vip = v[static_cast<std::size_t>(i) * n + p];
                    double viq = v[static_cast<std::size_t>(i) * n + q];
                    v[static_cast<std::size_t>(i) * n + p] = c * vip - s * viq;
                    v[static_cast<std::size_t>(i) * n + q] = s * vip + c * viq;
                }
            }
        }
    }

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int i, int j) {
        return a[static_cast<std::size_t>(i) * n + i] < a[static_cast<std::size_t>(j) * n + j];
    });
    eigvals.assign(static_cast<std::size_t>(n), 0.0);
    eigvecs.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int k = 0; k < n; ++k) {
        int src = order[static_cast<std::size_t>(k)];
        eigvals[static_cast<std::size_t>(k)] = a[static_cast<std::size_t>(src) * n + src];
        for (int i = 0; i < n; ++i)
            eigvecs[static_cast<std::size_t>(i) * n + k] = v[static_cast<std::size_t>(i) * n + src];
    }
}

bool cholesky(int n, const std::vector<double>& a, std::vector<double>& l) {
    if (static_cast<int>(a.size()) != n * n) throw ValueError("cholesky: bad matrix size");
    l.assign(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = a[static_cast<std::size_t>(i) * n + j];
            for (int k = 0; k < j; ++k)
                s -= l[static_cast<std::size_t>(i) * n + k] * l[static_cast<std::size_t>(j) * n + k];
            if (i == j) {
                if (s <= 0.0) return false;
                l[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
            } else {
                l[static_cast<std::size_t>(i) * n + j] = s / l[static_cast<std::size_t>(j) * n + j];
            }
        }
    }
    return true;
}

}  // namespace colora
