#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Core>

namespace ntklens {

// Counter-based seed derivation: a global seed plus a stream name and index
// map to an independent substream seed. Adding consumers to one stream never
// shifts the randomness of another, which keeps sweep cells reproducible when
// the grid grows.
std::uint64_t derive_seed(std::uint64_t global_seed, const std::string& stream,
                          std::uint64_t index = 0);

// Deterministic double-precision generator. mt19937_64 raw output is fully
// specified by the standard; the mappings to uniform/normal draws are done
// here (53-bit uniform, Box-Muller) instead of std distributions, whose
// sequences differ between standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform on [0, 1) excluding 0 (safe for log()).
    double uniform_pos() {
        double u = uniform();
        while (u == 0.0) u = uniform();
        return u;
    }

    // Standard normal via Box-Muller; the spare draw is cached, so the
    // sequence is a pure function of the seed and the call count.
    double normal();

    // +1 or -1 with equal probability.
    double rademacher() { return (engine_() & 1u) ? 1.0 : -1.0; }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    Eigen::VectorXd normal_vector(Eigen::Index n);
    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Fisher-Yates shuffle of 0..n-1 driven by Rng::index.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace ntklens
