#include "widescan/cooperative.hpp"

#include "widescan/dft.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace widescan {

RVector flat_gains(Index n, double gain)
{
    require(gain >= 0.0 && std::isfinite(gain), "flat_gains: gain must be finite and >= 0");
    return RVector::Constant(n, gain);
}

Contribution su_sense(const SecondaryUser& su, const SpectrumInstance& instance,
                      const NoiseModel& noise, std::uint64_t noise_seed)
{
    const Index n = instance.x.size();
    require(su.branches >= 1 && su.scans >= 1, "su_sense: branches and scans must be >= 1");
    require(su.channel_gains.size() == n, "su_sense: need one channel gain per band");
    require((su.channel_gains.array() >= 0.0).all(), "su_sense: channel gains must be >= 0");

    const CVector faded = instance.x.cwiseProduct(su.channel_gains.cwiseSqrt().cast<Complex>());
    Contribution c;
    c.su_id = su.id;
    c.seed = su.seed;
    c.received = add_time_noise(unitary_idft(faded), noise, noise_seed);
    const AfeBank bank = make_pn_bank(su.rows_per_round(), n, su.seed);
    c.phi_rows = bank_to_reduction(bank).entries;
    c.values = afe_measure(bank, c.received);
    return c;
}

FusionCenter::FusionCenter(Index target_m, Index n, double quorum)
    : target_m_(target_m), n_(n), quorum_(quorum)
{
    require(target_m >= 1, "fusion center: target m must be >= 1");
    require(n >= 1, "fusion center: n must be >= 1");
    require(quorum > 0.0 && quorum <= 1.0, "fusion center: quorum must lie in (0, 1]");
}

void FusionCenter::ingest(Contribution c)
{
    require(c.phi_rows.cols() == n_, "fusion center: SU " + std::to_string(c.su_id) +
                                         " sent rows of length " +
                                         std::to_string(c.phi_rows.cols()) + ", expected " +
                                         std::to_string(n_));
    require(c.phi_rows.rows() == c.values.size(),
            "fusion center: row count and value count differ for SU " + std::to_string(c.su_id));
    require(std::find(seeds_.begin(), seeds_.end(), c.seed) == seeds_.end(),
            "fusion center: PN seed reused by SU " + std::to_string(c.su_id));
    require(std::find(su_ids_.begin(), su_ids_.end(), c.su_id) == su_ids_.end(),
            "fusion center: SU " + std::to_string(c.su_id) + " already reported");
    seeds_.push_back(c.seed);
    su_ids_.push_back(c.su_id);
    for (Index i = 0; i < c.phi_rows.rows(); ++i) {
        std::vector<double> row(static_cast<std::size_t>(n_));
        for (Index j = 0; j < n_; ++j) {
            row[static_cast<std::size_t>(j)] = c.phi_rows(i, j);
        }
        rows_.push_back(std::move(row));
        values_.push_back(c.values[i]);
    }
}

ReductionMatrix FusionCenter::composite_phi() const
{
    ReductionMatrix phi;
    phi.kind = MatrixKind::bernoulli;
    phi.entries.resize(pooled_rows(), n_);
    for (Index i = 0; i < pooled_rows(); ++i) {
        for (Index j = 0; j < n_; ++j) {
            phi.entries(i, j) = rows_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return phi;
}

CVector FusionCenter::composite_y() const
{
    CVector y(pooled_rows());
    for (Index i = 0; i < pooled_rows(); ++i) {
        y[i] = values_[static_cast<std::size_t>(i)];
    }
    return y;
}

std::optional<RecoveryResult> FusionCenter::pool_and_recover(const BlockPartition& part,
                                                             const std::vector<double>& weights,
                                                             double epsilon) const
{
    if (!ready()) {
        return std::nullopt;
    }
    require(part.n() == n_, "fusion center: partition size does not match row length");
    RecoveryProblem problem{compose_sensing(composite_phi()), composite_y(), epsilon, weights};
    return solve_wlasso(problem, part);
}

std::optional<RecoveryResult> pool_and_recover(FusionCenter& fc, std::vector<Contribution> contributions,
                                               const BlockPartition& part,
                                               const std::vector<double>& weights, double epsilon)
{
    std::stable_sort(contributions.begin(), contributions.end(),
                     [](const Contribution& a, const Contribution& b) { return a.su_id < b.su_id; });
    for (auto& c : contributions) {
        fc.ingest(std::move(c));
    }
    return fc.pool_and_recover(part, weights, epsilon);
}

std::vector<bool> fuse_votes(const std::vector<std::vector<bool>>& local_occupancies, double quorum)
{
    require(!local_occupancies.empty(), "fuse_votes: no voters");
    require(quorum > 0.0 && quorum <= 1.0, "fuse_votes: quorum must lie in (0, 1]");
    const std::size_t n = local_occupancies.front().size();
    for (const auto& v : local_occupancies) {
        require(v.size() == n, "fuse_votes: voters disagree on the number of bands");
    }
    const double voters = static_cast<double>(local_occupancies.size());
    std::vector<bool> fused(n, false);
    for (std::size_t b = 0; b < n; ++b) {
        std::size_t votes = 0;
        for (const auto& v : local_occupancies) {
            votes += v[b] ? 1 : 0;
        }
        fused[b] = static_cast<double>(votes) / voters >= quorum;
    }
    return fused;
}

std::string decision_hash(const std::vector<bool>& decision)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (bool bit : decision) {
        h ^= bit ? 0x31u : 0x30u;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string to_string(FusionMode mode)
{
    return mode == FusionMode::vote ? "vote" : "pool";
}

FusionMode fusion_mode_from_string(const std::string& name)
{
    if (name == "vote") {
        return FusionMode::vote;
    }
    if (name == "pool") {
        return FusionMode::pool;
    }
    throw InvalidArgument("unknown fusion mode '" + name + "' (expected vote or pool)");
}

namespace {

std::vector<bool> detect(const RecoveryResult& res, double threshold)
{
    return decide_occupancy({res.z_star}, threshold);
}

}  // namespace

RoundOutcome run_round(int round, const std::vector<SecondaryUser>& sus,
                       const SpectrumInstance& instance, const BlockPartition& part,
                       const std::vector<double>& weights, double sigma,
                       const CooperativeSettings& settings, std::uint64_t noise_seed)
{
    require(!sus.empty(), "cooperative round: no secondary users");
    std::vector<const SecondaryUser*> order;
    for (const auto& su : sus) {
        order.push_back(&su);
    }
    std::stable_sort(order.begin(), order.end(),
                     [](const SecondaryUser* a, const SecondaryUser* b) { return a->id < b->id; });

    std::vector<Contribution> reports;
    for (std::size_t i = 0; i < order.size(); ++i) {
        reports.push_back(su_sense(*order[i], instance, NoiseModel{sigma},
                                   derive_seed(noise_seed, {static_cast<std::uint64_t>(i)})));
    }

    RoundOutcome out;
    if (settings.mode == FusionMode::vote) {
        for (const auto& c : reports) {
            ReductionMatrix phi;
            phi.kind = MatrixKind::bernoulli;
            phi.seed = c.seed;
            phi.entries = c.phi_rows;
            RecoveryProblem problem{compose_sensing(phi), c.values,
                                    noise_epsilon(sigma, phi, settings.delta), weights};
            out.su_ids.push_back(c.su_id);
            out.local_results.push_back(solve_wlasso(problem, part));
            out.local.push_back(detect(out.local_results.back(), settings.threshold));
            out.log.push_back({round, std::to_string(c.su_id), c.phi_rows.rows(),
                               decision_hash(out.local.back())});
        }
        out.fused = fuse_votes(out.local, settings.quorum);
        out.log.push_back({round, "fc", 0, decision_hash(out.fused)});
        return out;
    }

    Index total = 0;
    for (const auto& c : reports) {
        total += c.phi_rows.rows();
    }
    const Index target = settings.target_m > 0 ? settings.target_m : total;
    FusionCenter fc(target, instance.x.size(), settings.quorum);
    for (auto& c : reports) {
        const int id = c.su_id;
        out.su_ids.push_back(id);
        const Index rows = c.phi_rows.rows();
        fc.ingest(std::move(c));
        out.log.push_back({round, std::to_string(id), rows, "pending"});
    }
    out.pooled =
        fc.pool_and_recover(part, weights, noise_epsilon(sigma, fc.composite_phi(), settings.delta));
    if (out.pooled) {
        out.fused = detect(*out.pooled, settings.threshold);
        out.log.push_back({round, "fc", 0, decision_hash(out.fused)});
    } else {
        out.log.push_back({round, "fc", 0, "pending"});
    }
    return out;
}

void write_fusion_log(const std::vector<FusionLogRow>& rows, const std::string& path)
{
    std::ofstream out(path);
    require(static_cast<bool>(out), "cannot open '" + path + "' for writing");
    out << "round,su_id,rows_contributed,decision_hash\n";
    for (const auto& r : rows) {
        out << r.round << ',' << r.su_id << ',' << r.rows_contributed << ',' << r.decision_hash
            << '\n';
    }
    require(static_cast<bool>(out), "write to '" + path + "' failed");
}

}  // namespace widescan
