#include "sega/pca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sega/errors.hpp"

namespace sega {

namespace {

// cyclic Jacobi rotations on a symmetric matrix; returns eigenvalues on the
// diagonal of a and eigenvectors in the columns of v
void jacobi_eigen(std::vector<double>& a, std::vector<double>& v, int d) {
    v.assign(static_cast<size_t>(d) * d, 0.0);
    for (int i = 0; i < d; ++i) v[static_cast<size_t>(i) * d + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < d; ++p)
            for (int q = p + 1; q < d; ++q) off += a[static_cast<size_t>(p) * d + q] * a[static_cast<size_t>(p) * d + q];
        if (off < 1e-24) break;
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                const double apq = a[static_cast<size_t>(p) * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = a[static_cast<size_t>(p) * d + p];
                const double aqq = a[static_cast<size_t>(q) * d + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int i = 0; i < d; ++i) {
                    const double aip = a[static_cast<size_t>(i) * d + p];
                    const double aiq = a[static_cast<size_t>(i) * d + q];
                    a[static_cast<size_t>(i) * d + p] = c * aip - s * aiq;
                    a[static_cast<size_t>(i) * d + q] = s * aip + c * aiq;
                }
                for (int i = 0; i < d; ++i) {
                    const double api = a[static_cast<size_t>(p) * d + i];
                    const double aqi = a[static_cast<size_t>(q) * d + i];
                    a[static_cast<size_t>(p) * d + i] = c * api - s * aqi;
                    a[static_cast<size_t>(q) * d + i] = s * api + c * aqi;
                }
                for (int i = 0; i < d; ++i) {
                    const double vip = v[static_cast<size_t>(i) * d + p];
                    const double viq = v[static_cast<size_t>(i) * d + q];
                    v[static_cast<size_t>(i) * d + p] = c * vip - s * viq;
                    v[static_cast<size_t>(i) * d + q] = s * vip + c * viq;
                }
            }
        }
    }
}

}  // namespace

PcaResult pca_fit(const std::vector<double>& data, int n, int dim, int k) {
    if (n <= 0 || dim <= 0) throw ShapeError("pca: need at least one sample and one dimension");
    if (static_cast<size_t>(n) * dim != data.size())
        throw ShapeError("pca: data length does not match n x dim");
    k = std::min(k, dim);

    PcaResult out;
    out.dim = dim;
    out.components_kept = k;
    out.mean.assign(dim, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) out.mean[j] += data[static_cast<size_t>(i) * dim + j];
    for (auto& m : out.mean) m /= n;

    std::vector<double> cov(static_cast<size_t>(dim) * dim, 0.0);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < dim; ++a) {
            const double da = data[static_cast<size_t>(i) * dim + a] - out.mean[a];
            for (int b = a; b < dim; ++b)
                cov[static_cast<size_t>(a) * dim + b] +=
                    da * (data[static_cast<size_t>(i) * dim + b] - out.mean[b]);
        }
    for (int a = 0; a < dim; ++a)
        for (int b = a; b < dim; ++b) {
            cov[static_cast<size_t>(a) * dim + b] /= n;
            cov[static_cast<size_t>(b) * dim + a] = cov[static_cast<size_t>(a) * dim + b];
        }

    std::vector<double> vecs;
    jacobi_eigen(cov, vecs, dim);

    std::vector<int> order(dim);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        return cov[static_cast<size_t>(x) * dim + x] > cov[static_cast<size_t>(y) * dim + y];
    });

    out.eigenvalues.resize(k);
    out.components.assign(static_cast<size_t>(k) * dim, 0.0);
    for (int c = 0; c < k; ++c) {
        const int col = order[c];
        out.eigenvalues[c] = cov[static_cast<size_t>(col) * dim + col];
        int arg = 0;
        for (int j = 0; j < dim; ++j) {
            out.components[static_cast<size_t>(c) * dim + j] = vecs[static_cast<size_t>(j) * dim + col];
            if (std::abs(out.components[static_cast<size_t>(c) * dim + j]) >
                std::abs(out.components[static_cast<size_t>(c) * dim + arg]))
                arg = j;
        }
        if (out.components[static_cast<size_t>(c) * dim + arg] < 0.0)
            for (int j = 0; j < dim; ++j) out.components[static_cast<size_t>(c) * dim + j] *= -1.0;
    }
    return out;
}

std::vector<double> pca_transform(const PcaResult& pca, const std::vector<double>& data, int n) {
    if (static_cast<size_t>(n) * pca.dim != data.size())
        throw ShapeError("pca_transform: data length does not match n x dim");
    std::vector<double> out(static_cast<size_t>(n) * pca.components_kept, 0.0);
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < pca.components_kept; ++c) {
            double acc = 0.0;
            for (int j = 0; j < pca.dim; ++j)
                acc += (data[static_cast<size_t>(i) * pca.dim + j] - pca.mean[j]) *
                       pca.components[static_cast<size_t>(c) * pca.dim + j];
            out[static_cast<size_t>(i) * pca.components_kept + c] = acc;
        }
    return out;
}

}  // namespace sega
