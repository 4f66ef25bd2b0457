#pragma once

// Exact PCA through a cyclic Jacobi eigendecomposition of the covariance
// matrix. Deterministic: components are sorted by eigenvalue (descending)
// and sign-fixed on their largest-magnitude coordinate.

#include <vector>

namespace sega {

struct PcaResult {
    int dim = 0;
    int components_kept = 0;
    std::vector<double> mean;        // dim
    std::vector<double> components;  // components_kept x dim, row-major
    std::vector<double> eigenvalues; // components_kept, descending
};

PcaResult pca_fit(const std::vector<double>& data, int n, int dim, int k);

// centered projection onto the kept components: n x components_kept
std::vector<double> pca_transform(const PcaResult& pca, const std::vector<double>& data, int n);

}  // namespace sega
