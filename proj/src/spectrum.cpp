#include "widescan/spectrum.hpp"

#include "widescan/dft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace widescan {

void BlockPartition::index_blocks()
{
    starts_.clear();
    band_block_.clear();
    Index start = 0;
    for (std::size_t j = 0; j < block_sizes_.size(); ++j) {
        starts_.push_back(start);
        for (Index b = 0; b < block_sizes_[j]; ++b) {
            band_block_.push_back(static_cast<Index>(j));
        }
        start += block_sizes_[j];
    }
}

namespace {

void check_sizes(Index n, const std::vector<Index>& block_sizes)
{
    require(!block_sizes.empty(), "block partition: need at least one block");
    Index total = 0;
    for (auto s : block_sizes) {
        require(s >= 1, "block partition: every block needs at least one band");
        total += s;
    }
    require(total == n, "block partition: block sizes sum to " + std::to_string(total) +
                            ", expected n = " + std::to_string(n));
}

void check_prob(double p)
{
    require(p >= 0.0 && p <= 1.0, "block partition: probability out of [0, 1]");
}

}  // namespace

BlockPartition make_block_partition(Index n, const std::vector<Index>& block_sizes,
                                    const std::vector<double>& block_probs)
{
    check_sizes(n, block_sizes);
    require(block_probs.size() == block_sizes.size(),
            "block partition: need one probability per block");
    BlockPartition part;
    part.block_sizes_ = block_sizes;
    for (std::size_t j = 0; j < block_sizes.size(); ++j) {
        check_prob(block_probs[j]);
        part.probs_.insert(part.probs_.end(), static_cast<std::size_t>(block_sizes[j]),
                           block_probs[j]);
    }
    part.index_blocks();
    return part;
}

BlockPartition make_band_partition(const std::vector<Index>& block_sizes,
                                   const std::vector<double>& band_probs)
{
    check_sizes(static_cast<Index>(band_probs.size()), block_sizes);
    for (double p : band_probs) {
        check_prob(p);
    }
    BlockPartition part;
    part.block_sizes_ = block_sizes;
    part.probs_ = band_probs;
    part.index_blocks();
    return part;
}

std::vector<double> average_block_sparsity(const BlockPartition& part)
{
    std::vector<double> kbar(static_cast<std::size_t>(part.num_blocks()), 0.0);
    for (Index i = 0; i < part.n(); ++i) {
        kbar[static_cast<std::size_t>(part.block_of(i))] += part.probs()[static_cast<std::size_t>(i)];
    }
    return kbar;
}

Index SpectrumInstance::sparsity() const
{
    return static_cast<Index>(std::count(occupancy.begin(), occupancy.end(), true));
}

SpectrumInstance sample_instance(const BlockPartition& part, AmplitudeModel model,
                                 std::uint64_t seed)
{
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Index n = part.n();

    SpectrumInstance inst;
    inst.occupancy.assign(static_cast<std::size_t>(n), false);
    inst.x = CVector::Zero(n);
    // Occupancy first, then amplitudes, so that the occupancy pattern for a
    // seed does not depend on the amplitude model.
    for (Index i = 0; i < n; ++i) {
        inst.occupancy[static_cast<std::size_t>(i)] = unif(rng) < part.probs()[static_cast<std::size_t>(i)];
    }
    for (Index i = 0; i < n; ++i) {
        if (!inst.occupancy[static_cast<std::size_t>(i)]) {
            continue;
        }
        switch (model) {
        case AmplitudeModel::rayleigh: {
            Complex a{0.0, 0.0};
            // CN(0,1) is zero with probability 0; redraw keeps x[i] != 0 exactly.
            while (a == Complex{0.0, 0.0}) {
                a = complex_normal(rng, 1.0);
            }
            inst.x[i] = a;
            break;
        }
        case AmplitudeModel::constant: {
            const double phase = 2.0 * std::numbers::pi * unif(rng);
            inst.x[i] = std::polar(1.0, phase);
            break;
        }
        }
    }
    inst.r = unitary_idft(inst.x);
    return inst;
}

SpectrumInstance instance_from_spectrum(const CVector& x)
{
    SpectrumInstance inst;
    inst.x = x;
    inst.occupancy.resize(static_cast<std::size_t>(x.size()));
    for (Index i = 0; i < x.size(); ++i) {
        inst.occupancy[static_cast<std::size_t>(i)] = x[i] != Complex{0.0, 0.0};
    }
    inst.r = unitary_idft(x);
    return inst;
}

std::vector<Index> block_counts(const BlockPartition& part, const std::vector<bool>& occupancy)
{
    require(static_cast<Index>(occupancy.size()) == part.n(), "block_counts: length mismatch");
    std::vector<Index> counts(static_cast<std::size_t>(part.num_blocks()), 0);
    for (Index i = 0; i < part.n(); ++i) {
        if (occupancy[static_cast<std::size_t>(i)]) {
            ++counts[static_cast<std::size_t>(part.block_of(i))];
        }
    }
    return counts;
}

CVector draw_time_noise(Index n, const NoiseModel& noise, std::uint64_t seed)
{
    require(noise.sigma >= 0.0, "noise sigma must be non-negative");
    CVector w = CVector::Zero(n);
    if (noise.sigma == 0.0) {
        return w;
    }
    Rng rng(seed);
    const double var = noise.sigma * noise.sigma;
    for (Index l = 0; l < n; ++l) {
        w[l] = complex_normal(rng, var);
    }
    return w;
}

CVector add_time_noise(const CVector& r, const NoiseModel& noise, std::uint64_t seed)
{
    if (noise.sigma == 0.0) {
        return r;
    }
    return r + draw_time_noise(r.size(), noise, seed);
}

double snr_of(const CVector& x, const CVector& noise_realization)
{
    const double noise_energy = noise_realization.squaredNorm();
    if (noise_energy == 0.0) {
        return kInfiniteSnr;
    }
    return 10.0 * std::log10(x.squaredNorm() / noise_energy);
}

}  // namespace widescan
