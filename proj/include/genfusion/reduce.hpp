#pragma once

#include <cstddef>
#include <vector>

#include "genfusion/tensor.hpp"

namespace genfusion {

class Rng;

/// Dense row-major matrix of observations (rows) by features (cols).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct PcaResult {
    Matrix projected;                       // N x k
    Matrix components;                      // k x D, orthonormal rows
    std::vector<double> explained_variance; // k, descending
    std::vector<double> mean;               // D
    double total_variance = 0.0;
};

/// Mean-centred projection onto the top-k principal axes. Each component is
/// signed so that its largest-magnitude coordinate is positive.
PcaResult pca(const Matrix& x, std::size_t k);

struct TsneConfig {
    std::size_t dims = 2;
    double perplexity = 30.0;
    int iterations = 1000;
    double learning_rate = 0.0;  // <= 0: max(N / early_exaggeration / 4, 50)
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    // Start from the leading principal coordinates (scaled to std 1e-4)
    // rather than isotropic noise; keeps well-separated groups apart.
    bool pca_init = true;
};

struct TsneResult {
    Matrix embedding;  // N x dims
    double initial_kl = 0.0;
    double final_kl = 0.0;
};

/// Exact t-SNE: perplexity-calibrated Gaussian affinities, Student-t
/// similarities, momentum gradient descent with gains and early
/// exaggeration.
TsneResult tsne(const Matrix& x, const TsneConfig& config, Rng& rng);

struct KMeansResult {
    std::vector<int> labels;
    Matrix centroids;
    double inertia = 0.0;
    std::vector<double> inertia_history;  // per Lloyd iteration of the best restart
};

/// Lloyd's algorithm with k-means++ seeding; best inertia over restarts.
KMeansResult kmeans(const Matrix& x, std::size_t k, int restarts, Rng& rng);

struct FilterConfig {
    std::size_t pca_dims = 50;
    std::size_t tsne_dims = 2;
    double tsne_perplexity = 30.0;
    int tsne_iters = 1000;
    std::size_t kmeans_k = 3;
    int kmeans_restarts = 8;
};

struct FilterReport {
    std::vector<std::size_t> kept;  // indices into the input, ascending
    std::vector<int> labels;
    std::vector<std::size_t> cluster_sizes;
    int largest_cluster = 0;
    Matrix embedding;
    std::size_t pca_dims_used = 0;
    double perplexity_used = 0.0;
    double initial_kl = 0.0;
    double final_kl = 0.0;
};

/// PCA -> t-SNE -> k-means on flattened images; keeps the most populous
/// cluster (ties go to the lowest cluster index). PCA dims and perplexity
/// are capped at what the sample count supports.
FilterReport filter_largest_cluster(const std::vector<ImageTensor>& images, const FilterConfig& config, Rng& rng);

}  // namespace genfusion
