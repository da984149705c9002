#include <Eigen/SVD>

#include "nestfuse/baselines.hpp"
#include "nestfuse/error.hpp"

namespace nestfuse {

PcaModel pca_fit(const Mat &x, std::size_t latent_dim) {
    if (latent_dim == 0) fail(ErrorKind::kConfig, "PCA latent dim must be positive");
    if (x.rows() < 2) fail(ErrorKind::kValidation, "PCA needs at least two rows");
    if (!x.allFinite()) fail(ErrorKind::kValidation, "PCA input has non-finite values");

    PcaModel m;
    m.mean = x.colwise().mean();
    const Mat centred = x.rowwise() - m.mean;
    Eigen::BDCSVD<Mat> svd(centred, Eigen::ComputeThinV);
    const Eigen::VectorXd &s = svd.singularValues();
    const double tol = s.size() > 0 ? s[0] * 1e-10 : 0.0;
    Eigen::Index keep = 0;
    while (keep < s.size() && keep < Eigen::Index(latent_dim) && s[keep] > tol) ++keep;

    m.components = svd.matrixV().leftCols(keep);
    // Fix the sign so the largest-magnitude loading of each axis is positive.
    for (Eigen::Index j = 0; j < keep; ++j) {
        Eigen::Index at = 0;
        m.components.col(j).cwiseAbs().maxCoeff(&at);
        if (m.components(at, j) < 0) m.components.col(j) *= -1.0;
    }
    m.variances = s.head(keep).array().square() / double(x.rows() - 1);
    return m;
}

Mat PcaModel::encode(const Mat &x) const {
    if (x.cols() != mean.size()) fail(ErrorKind::kInference, "PCA encode: wrong row width");
    return (x.rowwise() - mean) * components;
}

Mat PcaModel::decode(const Mat &codes) const {
    if (codes.cols() != components.cols()) fail(ErrorKind::kInference, "PCA decode: wrong code width");
    return (codes * components.transpose()).rowwise() + mean;
}

}  // namespace nestfuse
