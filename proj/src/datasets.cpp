#include "ebdiff/datasets.hpp"

#include <cmath>
#include <stdexcept>

namespace ebdiff {

namespace {

constexpr double kPi = 3.14159265358979323846;

void standardize(Matrix& pts) {
    for (int c = 0; c < pts.cols; ++c) {
        double mean = 0.0;
        for (int i = 0; i < pts.rows; ++i) mean += pts(i, c);
        mean /= pts.rows;
        double var = 0.0;
        for (int i = 0; i < pts.rows; ++i) {
            double d = pts(i, c) - mean;
            var += d * d;
        }
        var /= pts.rows;
        double scale = var > 0.0 ? std::sqrt(var) : 1.0;
        for (int i = 0; i < pts.rows; ++i) pts(i, c) = (pts(i, c) - mean) / scale;
    }
}

Matrix gen_gauss8(int n, Rng& rng) {
    std::uniform_int_distribution<int> mode(0, 7);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix pts(n, 2);
    for (int i = 0; i < n; ++i) {
        double angle = 2.0 * kPi * mode(rng) / 8.0;
        pts(i, 0) = std::cos(angle) + 0.05 * gauss(rng);
        pts(i, 1) = std::sin(angle) + 0.05 * gauss(rng);
    }
    return pts;
}

Matrix gen_two_moons(int n, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix pts(n, 2);
    for (int i = 0; i < n; ++i) {
        double theta = kPi * unit(rng);
        double x, y;
        if (i % 2 == 0) {  // outer moon
            x = std::cos(theta);
            y = std::sin(theta);
        } else {  // inner moon, shifted and flipped
            x = 1.0 - std::cos(theta);
            y = 0.5 - std::sin(theta);
        }
        pts(i, 0) = x + 0.05 * gauss(rng);
        pts(i, 1) = y + 0.05 * gauss(rng);
    }
    standardize(pts);
    return pts;
}

Matrix gen_swiss_roll(int n, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix pts(n, 2);
    for (int i = 0; i < n; ++i) {
        double t = 1.5 * kPi * (1.0 + 2.0 * unit(rng));
        pts(i, 0) = t * std::cos(t) + 0.05 * gauss(rng);
        pts(i, 1) = t * std::sin(t) + 0.05 * gauss(rng);
    }
    standardize(pts);
    return pts;
}

Matrix gen_checkerboard(int n, Rng& rng) {
    // Dark cells of a 4x4 board over [-2, 2]^2: (i + j) even.
    std::uniform_int_distribution<int> cell(0, 7);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Matrix pts(n, 2);
    for (int i = 0; i < n; ++i) {
        int k = cell(rng);
        int row = k / 2;
        int col = 2 * (k % 2) + (row % 2);  // parity keeps (row + col) even
        pts(i, 0) = -2.0 + col + unit(rng);
        pts(i, 1) = -2.0 + row + unit(rng);
    }
    standardize(pts);
    return pts;
}

}  // namespace

SampleBatch generate_dataset(const std::string& name, int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    Rng rng(derive_seed(seed, "dataset:" + name));
    SampleBatch batch;
    batch.source = name;
    batch.seed = seed;
    if (name == "gauss8")
        batch.points = gen_gauss8(n, rng);
    else if (name == "two_moons")
        batch.points = gen_two_moons(n, rng);
    else if (name == "swiss_roll")
        batch.points = gen_swiss_roll(n, rng);
    else if (name == "checkerboard")
        batch.points = gen_checkerboard(n, rng);
    else
        throw std::invalid_argument("generate_dataset: unknown dataset " + name);
    if (!batch.points.all_finite()) throw std::runtime_error("generate_dataset: non-finite point");
    return batch;
}

}  // namespace ebdiff
