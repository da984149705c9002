#include "nestfuse/wasserstein.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "nestfuse/error.hpp"

namespace nestfuse {

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) fail(ErrorKind::kValidation, "wasserstein_1d needs two nonempty samples");
    std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const std::uint64_t n = x.size(), m = y.size();
    if (n == m) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += std::abs(x[i] - y[i]);
        return s / double(n);
    }
    // Quantile breakpoints in units of 1 / (n m): x[i] covers up to (i+1) m,
    // y[j] up to (j+1) n.
    double s = 0.0;
    std::uint64_t at = 0, i = 0, j = 0;
    while (i < n && j < m) {
        const std::uint64_t ea = (i + 1) * m, eb = (j + 1) * n;
        const std::uint64_t next = std::min(ea, eb);
        s += double(next - at) * std::abs(x[i] - y[j]);
        at = next;
        if (ea == next) ++i;
        if (eb == next) ++j;
    }
    return s / (double(n) * double(m));
}

ad::Mat projection_directions(std::size_t dim, std::size_t n_proj, std::uint64_t seed) {
    if (dim == 0 || n_proj == 0) fail(ErrorKind::kConfig, "projections need dim >= 1 and n_proj >= 1");
    ad::Mat dirs(static_cast<Eigen::Index>(n_proj), static_cast<Eigen::Index>(dim));
    if (dim == 1) {
        dirs.setOnes();
        return dirs;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (Eigen::Index p = 0; p < dirs.rows(); ++p) {
        double norm = 0.0;
        do {
            for (Eigen::Index k = 0; k < dirs.cols(); ++k) dirs(p, k) = unit(rng);
            norm = dirs.row(p).norm();
        } while (!(norm > 1e-12));
        dirs.row(p) /= norm;
    }
    return dirs;
}

double sliced_wasserstein(const ad::Mat &a, const ad::Mat &b, std::size_t n_proj, std::uint64_t seed) {
    if (a.cols() != b.cols()) fail(ErrorKind::kValidation, "sliced_wasserstein: dimension mismatch");
    if (a.rows() == 0 || b.rows() == 0) fail(ErrorKind::kValidation, "sliced_wasserstein needs nonempty samples");
    const ad::Mat dirs = projection_directions(std::size_t(a.cols()), n_proj, seed);
    const ad::Mat pa = a * dirs.transpose(), pb = b * dirs.transpose();
    double s = 0.0;
    for (Eigen::Index p = 0; p < dirs.rows(); ++p) {
        const Eigen::VectorXd ca = pa.col(p), cb = pb.col(p);
        s += wasserstein_1d({ca.data(), std::size_t(ca.size())}, {cb.data(), std::size_t(cb.size())});
    }
    return s / double(dirs.rows());
}

}  // namespace nestfuse
