#pragma once

#include "widescan/common.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace widescan {

/// The n narrowbands grouped into g disjoint contiguous blocks, with a
/// per-band occupancy probability.
class BlockPartition {
public:
    Index n() const { return static_cast<Index>(probs_.size()); }
    Index num_blocks() const { return static_cast<Index>(block_sizes_.size()); }
    const std::vector<Index>& block_sizes() const { return block_sizes_; }
    const std::vector<double>& probs() const { return probs_; }

    /// First band of block j.
    Index block_start(Index j) const { return starts_[static_cast<std::size_t>(j)]; }
    Index block_of(Index band) const { return band_block_[static_cast<std::size_t>(band)]; }

    friend BlockPartition make_block_partition(Index, const std::vector<Index>&,
                                               const std::vector<double>&);
    friend BlockPartition make_band_partition(const std::vector<Index>&,
                                              const std::vector<double>&);

private:
    BlockPartition() = default;
    void index_blocks();

    std::vector<Index> block_sizes_;
    std::vector<double> probs_;
    std::vector<Index> starts_;
    std::vector<Index> band_block_;
};

/// Expands one probability per block to every band of that block.
BlockPartition make_block_partition(Index n, const std::vector<Index>& block_sizes,
                                    const std::vector<double>& block_probs);

/// Partition with explicit per-band probabilities (n = probs.size()).
BlockPartition make_band_partition(const std::vector<Index>& block_sizes,
                                   const std::vector<double>& band_probs);

/// kbar_j = sum of p_i over the bands of block j.
std::vector<double> average_block_sparsity(const BlockPartition& part);

enum class AmplitudeModel {
    rayleigh,  // CN(0, 1) per occupied band: Rayleigh magnitude, uniform phase, unit power
    constant,  // unit magnitude, uniform phase
};

struct SpectrumInstance {
    std::vector<bool> occupancy;
    CVector x;  // per-band faded amplitudes, zero where vacant
    CVector r;  // unitary inverse DFT of x (Nyquist time samples)

    Index sparsity() const;
};

SpectrumInstance sample_instance(const BlockPartition& part, AmplitudeModel model,
                                 std::uint64_t seed);

/// Builds an instance from a given frequency vector (occupancy = nonzero support).
SpectrumInstance instance_from_spectrum(const CVector& x);

/// Realized occupied-band count per block.
std::vector<Index> block_counts(const BlockPartition& part, const std::vector<bool>& occupancy);

struct NoiseModel {
    double sigma = 0.0;  // std deviation per complex sample
};

/// r + w with w_l ~ CN(0, sigma^2) i.i.d.
CVector add_time_noise(const CVector& r, const NoiseModel& noise, std::uint64_t seed);

/// The noise realization add_time_noise would add (same seed, same draw order).
CVector draw_time_noise(Index n, const NoiseModel& noise, std::uint64_t seed);

/// 10 log10(|x|^2 / |eta|^2); +infinity for an all-zero noise vector.
double snr_of(const CVector& x, const CVector& noise_realization);

constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

}  // namespace widescan
