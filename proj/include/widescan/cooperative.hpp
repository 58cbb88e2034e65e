#pragma once

#include "widescan/measurement.hpp"
#include "widescan/recovery.hpp"
#include "widescan/spectrum.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace widescan {

/// A sensing node with b hardware branches that scans s times per round.
struct SecondaryUser {
    int id = 0;
    Index branches = 1;
    Index scans = 1;
    RVector channel_gains;  // per-band received power scaling, >= 0
    std::uint64_t seed = 0;  // PN bank seed

    Index rows_per_round() const { return branches * scans; }
};

/// One SU's report: its Phi rows and the matching measurement values.
struct Contribution {
    int su_id = 0;
    std::uint64_t seed = 0;
    RMatrix phi_rows;
    CVector values;
    CVector received;  // the SU's own noisy Nyquist samples (kept for bookkeeping checks)
};

/// Per-band gains for n bands, all `gain`.
RVector flat_gains(Index n, double gain = 1.0);

/// Applies sqrt(gain) to each band of x, inverse-transforms, adds this SU's
/// noise draw and measures with b*s rows of the SU's PN bank.
Contribution su_sense(const SecondaryUser& su, const SpectrumInstance& instance,
                      const NoiseModel& noise, std::uint64_t noise_seed);

/// Pools reports until at least m rows are available, then runs WLASSO on
/// every pooled row.
class FusionCenter {
public:
    FusionCenter(Index target_m, Index n, double quorum = 0.5);

    /// Rejects wrong row lengths, repeated PN seeds and repeated SU ids.
    void ingest(Contribution c);

    Index pooled_rows() const { return static_cast<Index>(values_.size()); }
    Index target_m() const { return target_m_; }
    double quorum() const { return quorum_; }
    bool ready() const { return pooled_rows() >= target_m_; }
    const std::vector<int>& contributors() const { return su_ids_; }

    ReductionMatrix composite_phi() const;
    CVector composite_y() const;

    /// Empty ("pending") while fewer than m rows have arrived.
    std::optional<RecoveryResult> pool_and_recover(const BlockPartition& part,
                                                   const std::vector<double>& weights,
                                                   double epsilon) const;

private:
    Index target_m_;
    Index n_;
    double quorum_;
    std::vector<std::vector<double>> rows_;
    std::vector<Complex> values_;
    std::vector<std::uint64_t> seeds_;
    std::vector<int> su_ids_;
};

/// Ingests the contributions in arrival order (ties by SU id) and recovers.
std::optional<RecoveryResult> pool_and_recover(FusionCenter& fc, std::vector<Contribution> contributions,
                                               const BlockPartition& part,
                                               const std::vector<double>& weights, double epsilon);

/// Band b occupied iff (occupied votes / voters) >= q, with q in (0, 1].
std::vector<bool> fuse_votes(const std::vector<std::vector<bool>>& local_occupancies, double quorum);

/// FNV-1a over the decision bits, as 16 hex digits.
std::string decision_hash(const std::vector<bool>& decision);

enum class FusionMode { vote, pool };

std::string to_string(FusionMode mode);
FusionMode fusion_mode_from_string(const std::string& name);

struct FusionLogRow {
    int round = 0;
    std::string su_id;  // SU id, or "fc" for the fused decision
    Index rows_contributed = 0;
    std::string decision_hash;  // "pending" when no decision exists yet
};

struct CooperativeSettings {
    FusionMode mode = FusionMode::vote;
    double quorum = 0.5;
    Index target_m = 0;       // pool mode trigger; 0 means the sum of all SU rows
    double threshold = 0.1;   // energy threshold on |z_b|^2
    double delta = 0.1;       // epsilon inflation
};

struct RoundOutcome {
    std::vector<int> su_ids;                     // arrival order
    std::vector<RecoveryResult> local_results;   // vote mode only, arrival order
    std::vector<std::vector<bool>> local;        // vote mode only, arrival order
    std::optional<RecoveryResult> pooled;        // pool mode, once m rows arrived
    std::vector<bool> fused;                     // empty if the pool never reached m
    std::vector<FusionLogRow> log;
};

/// One sensing round. Every SU shares the noise sigma; SU i draws its noise
/// from derive_seed(noise_seed, {i}).
RoundOutcome run_round(int round, const std::vector<SecondaryUser>& sus,
                       const SpectrumInstance& instance, const BlockPartition& part,
                       const std::vector<double>& weights, double sigma,
                       const CooperativeSettings& settings, std::uint64_t noise_seed);

/// Writes the header `round,su_id,rows_contributed,decision_hash` and the rows.
void write_fusion_log(const std::vector<FusionLogRow>& rows, const std::string& path);

}  // namespace widescan
