#include "genfusion/reduce.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "genfusion/error.hpp"
#include "genfusion/rng.hpp"

namespace genfusion {

namespace {

double squared_distance(const Matrix& x, std::size_t i, const Matrix& y, std::size_t j) {
    double d = 0.0;
    for (std::size_t c = 0; c < x.cols; ++c) {
        const double diff = x(i, c) - y(j, c);
        d += diff * diff;
    }
    return d;
}

// Row i of the conditional affinity matrix for squared distances `d2`,
// with the precision found by bisection on the entropy.
void calibrate_row(const std::vector<double>& d2, std::size_t n, std::size_t i, double target_entropy,
                   std::vector<double>& row) {
    double beta = 1.0, lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    double min_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
        if (j != i) min_d = std::min(min_d, d2[i * n + j]);
    for (int iter = 0; iter < 200; ++iter) {
        double sum = 0.0, weighted = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) {
                row[j] = 0.0;
                continue;
            }
            // shifting by the nearest distance keeps exp() away from underflow
            const double shifted = d2[i * n + j] - min_d;
            row[j] = std::exp(-beta * shifted);
            sum += row[j];
            weighted += shifted * row[j];
        }
        const double entropy = std::log(sum) + beta * weighted / sum;
        for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
        const double diff = entropy - target_entropy;
        if (std::abs(diff) < 1e-6) break;
        if (diff > 0) {
            lo = beta;
            beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
        } else {
            hi = beta;
            beta = std::isinf(lo) ? beta * 0.5 : 0.5 * (beta + lo);
        }
    }
}

double kl_divergence(const std::vector<double>& p, const Matrix& y) {
    const std::size_t n = y.rows;
    std::vector<double> num(n * n, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            num[i * n + j] = 1.0 / (1.0 + squared_distance(y, i, y, j));
            z += num[i * n + j];
        }
    double kl = 0.0;
    for (std::size_t k = 0; k < n * n; ++k) {
        if (p[k] <= 0.0) continue;
        const double q = std::max(num[k] / z, 1e-300);
        kl += p[k] * std::log(p[k] / q);
    }
    return kl;
}

std::vector<int> assign(const Matrix& x, const Matrix& centroids, double& inertia) {
    std::vector<int> labels(x.rows);
    inertia = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centroids.rows; ++c) {
            const double d = squared_distance(x, i, centroids, c);
            if (d < best) {
                best = d;
                labels[i] = static_cast<int>(c);
            }
        }
        inertia += best;
    }
    return labels;
}

// Greedy k-means++: each new centre is the best of 2 + ln(k) candidates
// drawn with probability proportional to D^2.
Matrix kmeans_pp_seed(const Matrix& x, std::size_t k, Rng& rng) {
    Matrix centroids(k, x.cols);
    const auto n = static_cast<std::int64_t>(x.rows);
    auto first = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
    for (std::size_t c = 0; c < x.cols; ++c) centroids(0, c) = x(first, c);
    std::vector<double> d2(x.rows);
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) total += d2[i] = squared_distance(x, i, centroids, 0);
    const int trials = 2 + static_cast<int>(std::log(static_cast<double>(k)));
    std::vector<double> cand_d2(x.rows);
    for (std::size_t m = 1; m < k; ++m) {
        std::size_t best = 0;
        double best_total = std::numeric_limits<double>::infinity();
        std::vector<double> best_d2;
        for (int t = 0; t < trials; ++t) {
            std::size_t pick = x.rows - 1;
            if (total > 0.0) {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                for (std::size_t i = 0; i < x.rows; ++i) {
                    acc += d2[i];
                    if (acc > target) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
            }
            double cand_total = 0.0;
            for (std::size_t i = 0; i < x.rows; ++i)
                cand_total += cand_d2[i] = std::min(d2[i], squared_distance(x, i, x, pick));
            if (cand_total < best_total) {
                best_total = cand_total;
                best = pick;
                best_d2 = cand_d2;
            }
        }
        for (std::size_t c = 0; c < x.cols; ++c) centroids(m, c) = x(best, c);
        d2 = std::move(best_d2);
        total = best_total;
    }
    return centroids;
}

}  // namespace

PcaResult pca(const Matrix& x, std::size_t k) {
    require(x.rows >= 2, "pca needs at least two samples");
    require(k >= 1 && k <= std::min(x.rows - 1, x.cols),
            "pca dimension " + std::to_string(k) + " exceeds min(N - 1, D) = " +
                std::to_string(std::min(x.rows - 1, x.cols)));
    const auto n = static_cast<Eigen::Index>(x.rows), d = static_cast<Eigen::Index>(x.cols);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> data(x.data.data(), n, d);
    const Eigen::RowVectorXd mean = data.colwise().mean();
    const Eigen::MatrixXd centred = data.rowwise() - mean;

    PcaResult r;
    r.mean.assign(mean.data(), mean.data() + d);
    r.components = Matrix(k, x.cols);
    r.explained_variance.resize(k);
    r.total_variance = centred.squaredNorm() / static_cast<double>(x.rows - 1);

    Eigen::MatrixXd axes;
    Eigen::VectorXd variances;
    if (x.cols <= x.rows) {
        const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(x.rows - 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
        // ascending order; reverse into descending
        axes = eig.eigenvectors().rowwise().reverse();
        variances = eig.eigenvalues().reverse().cwiseMax(0.0);
    } else {
        Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
        axes = svd.matrixV();
        variances = svd.singularValues().array().square() / static_cast<double>(x.rows - 1);
    }

    for (std::size_t c = 0; c < k; ++c) {
        Eigen::VectorXd v = axes.col(static_cast<Eigen::Index>(c));
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        for (std::size_t j = 0; j < x.cols; ++j) r.components(c, j) = v(static_cast<Eigen::Index>(j));
        r.explained_variance[c] = variances(static_cast<Eigen::Index>(c));
    }

    r.projected = Matrix(x.rows, k);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < x.cols; ++j)
                acc += centred(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * r.components(c, j);
            r.projected(i, c) = acc;
        }
    return r;
}

TsneResult tsne(const Matrix& x, const TsneConfig& config, Rng& rng) {
    const std::size_t n = x.rows;
    require(n >= 4, "t-SNE needs at least 4 samples");
    require(config.dims >= 1, "t-SNE output dimension must be positive");
    require(config.perplexity >= 1.0 && config.perplexity <= static_cast<double>(n - 1) / 3.0,
            "perplexity " + std::to_string(config.perplexity) + " infeasible for " + std::to_string(n) +
                " samples (need 1 <= perplexity <= (N - 1) / 3)");
    require(config.iterations >= 0, "t-SNE iteration count must be non-negative");

    std::vector<double> d2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d2[i * n + j] = d2[j * n + i] = squared_distance(x, i, x, j);

    std::vector<double> p(n * n, 0.0), row(n);
    const double target = std::log(config.perplexity);
    for (std::size_t i = 0; i < n; ++i) {
        calibrate_row(d2, n, i, target, row);
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] = row[j];
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = std::max((p[i * n + j] + p[j * n + i]) / (2.0 * n), 1e-12);
            p[i * n + j] = p[j * n + i] = s;
        }
    for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 0.0;

    const std::size_t dims = config.dims;
    TsneResult result;
    Matrix& y = result.embedding;
    y = Matrix(n, dims);
    if (config.pca_init && dims <= std::min(x.cols, n - 1)) {
        const PcaResult init = pca(x, dims);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += init.projected(i, 0) * init.projected(i, 0);
        const double sd = std::sqrt(var / static_cast<double>(n));
        const double scale = sd > 0.0 ? 1e-4 / sd : 0.0;
        for (std::size_t k = 0; k < y.data.size(); ++k) y.data[k] = init.projected.data[k] * scale;
    } else {
        for (double& v : y.data) v = 1e-4 * rng.normal();
    }
    result.initial_kl = kl_divergence(p, y);

    const double lr = config.learning_rate > 0.0
                          ? config.learning_rate
                          : std::max(static_cast<double>(n) / config.early_exaggeration / 4.0, 50.0);
    Matrix velocity(n, dims), gains(n, dims, 1.0), grad(n, dims);
    std::vector<double> num(n * n);
    for (int iter = 0; iter < config.iterations; ++iter) {
        const double exaggeration = iter < config.exaggeration_iters ? config.early_exaggeration : 1.0;
        const double momentum = iter < config.exaggeration_iters ? 0.5 : 0.8;
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                num[i * n + j] = i == j ? 0.0 : 1.0 / (1.0 + squared_distance(y, i, y, j));
                z += num[i * n + j];
            }
        std::fill(grad.data.begin(), grad.data.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double coef = 4.0 * (exaggeration * p[i * n + j] - num[i * n + j] / z) * num[i * n + j];
                for (std::size_t c = 0; c < dims; ++c) grad(i, c) += coef * (y(i, c) - y(j, c));
            }
        for (std::size_t k = 0; k < y.data.size(); ++k) {
            const bool same_sign = (grad.data[k] > 0) == (velocity.data[k] > 0);
            gains.data[k] = std::max(same_sign ? gains.data[k] * 0.8 : gains.data[k] + 0.2, 0.01);
            velocity.data[k] = momentum * velocity.data[k] - lr * gains.data[k] * grad.data[k];
            y.data[k] += velocity.data[k];
        }
        for (std::size_t c = 0; c < dims; ++c) {
            double mean = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += y(i, c);
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) y(i, c) -= mean;
        }
    }
    result.final_kl = kl_divergence(p, y);
    return result;
}

KMeansResult kmeans(const Matrix& x, std::size_t k, int restarts, Rng& rng) {
    require(k >= 1, "k-means needs k >= 1");
    require(x.rows >= k, "k-means needs at least k = " + std::to_string(k) + " samples, got " +
                             std::to_string(x.rows));
    require(restarts >= 1, "k-means needs at least one restart");

    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int run = 0; run < restarts; ++run) {
        KMeansResult cur;
        cur.centroids = kmeans_pp_seed(x, k, rng);
        double inertia = 0.0;
        cur.labels = assign(x, cur.centroids, inertia);
        cur.inertia_history.push_back(inertia);
        for (int iter = 0; iter < 300; ++iter) {
            Matrix sums(k, x.cols);
            std::vector<std::size_t> counts(k, 0);
            for (std::size_t i = 0; i < x.rows; ++i) {
                const auto c = static_cast<std::size_t>(cur.labels[i]);
                ++counts[c];
                for (std::size_t j = 0; j < x.cols; ++j) sums(c, j) += x(i, j);
            }
            for (std::size_t c = 0; c < k; ++c) {
                if (counts[c] == 0) continue;
                for (std::size_t j = 0; j < x.cols; ++j) cur.centroids(c, j) = sums(c, j) / counts[c];
            }
            for (std::size_t c = 0; c < k; ++c) {
                if (counts[c] != 0) continue;
                // re-seed an empty cluster at the point farthest from its centroid
                std::size_t far = 0;
                double far_d = -1.0;
                for (std::size_t i = 0; i < x.rows; ++i) {
                    const double d = squared_distance(x, i, cur.centroids, static_cast<std::size_t>(cur.labels[i]));
                    if (d > far_d) {
                        far_d = d;
                        far = i;
                    }
                }
                for (std::size_t j = 0; j < x.cols; ++j) cur.centroids(c, j) = x(far, j);
                cur.labels[far] = static_cast<int>(c);
            }
            std::vector<int> labels = assign(x, cur.centroids, inertia);
            cur.inertia_history.push_back(inertia);
            const bool converged = labels == cur.labels;
            cur.labels = std::move(labels);
            if (converged) break;
        }
        cur.inertia = inertia;
        if (cur.inertia < best.inertia) best = std::move(cur);
    }
    return best;
}

FilterReport filter_largest_cluster(const std::vector<ImageTensor>& images, const FilterConfig& config, Rng& rng) {
    require(config.kmeans_k >= 1, "filter: cluster count must be positive");
    require(images.size() >= config.kmeans_k, "filter: need at least k images");
    const std::size_t n = images.size();
    const std::size_t d = images.front().size();
    Matrix flat(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        require(images[i].size() == d, "filter: images differ in size");
        std::copy(images[i].values().begin(), images[i].values().end(), flat.data.begin() + i * d);
    }

    FilterReport report;
    report.labels.assign(n, 0);
    report.cluster_sizes.assign(config.kmeans_k, 0);

    bool degenerate = n < 4;
    PcaResult reduced;
    if (!degenerate) {
        report.pca_dims_used = std::min({config.pca_dims, n - 1, d});
        reduced = pca(flat, report.pca_dims_used);
        degenerate = reduced.total_variance <= 0.0;
    }
    if (degenerate) {
        // identical (or too few) images: one cluster holds everything
        report.cluster_sizes[0] = n;
        report.embedding = Matrix(n, config.tsne_dims);
        report.kept.resize(n);
        std::iota(report.kept.begin(), report.kept.end(), std::size_t{0});
        return report;
    }

    TsneConfig tc;
    tc.dims = config.tsne_dims;
    tc.iterations = config.tsne_iters;
    tc.perplexity = std::max(1.0, std::min(config.tsne_perplexity, static_cast<double>(n - 1) / 3.0));
    tc.exaggeration_iters = std::min(250, config.tsne_iters / 4);
    report.perplexity_used = tc.perplexity;
    TsneResult emb = tsne(reduced.projected, tc, rng);
    report.initial_kl = emb.initial_kl;
    report.final_kl = emb.final_kl;
    report.embedding = emb.embedding;

    KMeansResult km = kmeans(emb.embedding, config.kmeans_k, config.kmeans_restarts, rng);
    report.labels = km.labels;
    for (int l : km.labels) ++report.cluster_sizes[static_cast<std::size_t>(l)];
    report.largest_cluster = static_cast<int>(
        std::max_element(report.cluster_sizes.begin(), report.cluster_sizes.end()) - report.cluster_sizes.begin());
    for (std::size_t i = 0; i < n; ++i)
        if (km.labels[i] == report.largest_cluster) report.kept.push_back(i);
    return report;
}

}  // namespace genfusion
