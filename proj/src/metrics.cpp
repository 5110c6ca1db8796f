#include "simdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "simdiff/errors.hpp"
#include "simdiff/format.hpp"

namespace simdiff {

namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    if (a.numel() == 0) throw ShapeError(std::string(op) + ": empty input");
}

void require_samples(const char* op, const Tensor& samples, const Tensor& truth) {
    if (samples.rank() != 3 || truth.rank() != 2 || samples.dim(1) != truth.dim(0) ||
        samples.dim(2) != truth.dim(1)) {
        throw ShapeError(std::string(op) + ": expected samples [N, H, M] and truth [H, M], got " +
                         shape_str(samples.shape()) + " and " + shape_str(truth.shape()));
    }
    if (samples.dim(0) == 0) throw ShapeError(std::string(op) + ": empty samples");
}

}  // namespace

double mse(const Tensor& pred, const Tensor& truth) {
    require_same("mse", pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = pred[i] - truth[i];
        s += d * d;
    }
    return s / static_cast<double>(pred.numel());
}

double mae(const Tensor& pred, const Tensor& truth) {
    require_same("mae", pred, truth);
    double s = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) s += std::abs(pred[i] - truth[i]);
    return s / static_cast<double>(pred.numel());
}

double crps(std::span<const double> samples, double y) {
    const std::size_t n = samples.size();
    if (n == 0) throw std::invalid_argument("crps: empty samples");
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    // Running mean keeps the identical-sample case exact.
    double fit = 0.0;
    for (std::size_t i = 0; i < n; ++i) fit += (std::abs(x[i] - y) - fit) / static_cast<double>(i + 1);
    // sum_{i<j} |x_i - x_j| through the sorted gaps: gap k is crossed by k (n - k) pairs
    double spread = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
        spread += (x[k] - x[k - 1]) * static_cast<double>(k) * static_cast<double>(n - k);
    }
    const double nd = static_cast<double>(n);
    return fit - spread / (nd * nd);
}

double crps_total(const Tensor& samples, const Tensor& truth) {
    require_samples("crps", samples, truth);
    const std::size_t n = samples.dim(0);
    const std::size_t cells = truth.numel();
    std::vector<double> col(n);
    double total = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
        for (std::size_t d = 0; d < n; ++d) col[d] = samples[d * cells + c];
        total += crps(col, truth[c]);
    }
    return total;
}

double abs_total(const Tensor& truth) {
    double s = 0.0;
    for (double v : truth.values()) s += std::abs(v);
    return s;
}

CrpsSumParts crps_sum_parts(const Tensor& samples, const Tensor& truth) {
    require_samples("crps_sum", samples, truth);
    const std::size_t n = samples.dim(0);
    const std::size_t h = samples.dim(1);
    const std::size_t m = samples.dim(2);
    CrpsSumParts parts;
    std::vector<double> col(n);
    for (std::size_t t = 0; t < h; ++t) {
        double y = 0.0;
        for (std::size_t c = 0; c < m; ++c) y += truth[t * m + c];
        for (std::size_t d = 0; d < n; ++d) {
            double s = 0.0;
            for (std::size_t c = 0; c < m; ++c) s += samples[(d * h + t) * m + c];
            col[d] = s;
        }
        parts.score += crps(col, y);
        parts.norm += std::abs(y);
    }
    return parts;
}

double crps_sum(const Tensor& samples, const Tensor& truth) {
    const CrpsSumParts p = crps_sum_parts(samples, truth);
    if (p.norm == 0.0) throw NumericError("crps_sum: truth sums to zero at every step");
    return p.score / p.norm;
}

double mean_sample_variance(const Tensor& samples) {
    if (samples.rank() != 3 || samples.dim(0) == 0) throw ShapeError("mean_sample_variance: expected [N, H, M]");
    const std::size_t n = samples.dim(0);
    const std::size_t cells = samples.numel() / n;
    double total = 0.0;
    for (std::size_t c = 0; c < cells; ++c) {
        // running mean: identical draws give exactly zero variance
        double mu = 0.0;
        for (std::size_t d = 0; d < n; ++d) mu += (samples[d * cells + c] - mu) / static_cast<double>(d + 1);
        double v = 0.0;
        for (std::size_t d = 0; d < n; ++d) {
            const double e = samples[d * cells + c] - mu;
            v += e * e;
        }
        total += v / static_cast<double>(n);
    }
    return total / static_cast<double>(cells);
}

void EvalAccumulator::add(std::size_t origin, const Tensor& samples, const Tensor& single, const Tensor& ensembled,
                          const Tensor& truth) {
    require_samples("evaluate", samples, truth);
    const std::size_t cells = truth.numel();
    WindowScore w;
    w.origin = origin;
    w.mse = mse(single, truth);
    w.mse_e = mse(ensembled, truth);
    w.mae = mae(ensembled, truth);
    const double ct = crps_total(samples, truth);
    const double at = abs_total(truth);
    w.crps = at > 0.0 ? ct / at : 0.0;
    const CrpsSumParts cs = crps_sum_parts(samples, truth);
    w.crps_sum = cs.norm > 0.0 ? cs.score / cs.norm : 0.0;
    w.var = mean_sample_variance(samples);

    const double cd = static_cast<double>(cells);
    se_single_ += w.mse * cd;
    se_ens_ += w.mse_e * cd;
    ae_ens_ += w.mae * cd;
    crps_num_ += ct;
    crps_den_ += at;
    cs_num_ += cs.score;
    cs_den_ += cs.norm;
    var_sum_ += w.var * cd;
    cells_ += cells;
    windows_.push_back(w);
}

EvalReport EvalAccumulator::report() const {
    if (cells_ == 0) throw std::invalid_argument("evaluate: no windows");
    const double cd = static_cast<double>(cells_);
    EvalReport r;
    r.mse = se_single_ / cd;
    r.mse_e = se_ens_ / cd;
    r.mae = ae_ens_ / cd;
    r.crps = crps_den_ > 0.0 ? crps_num_ / crps_den_ : 0.0;
    r.crps_sum = cs_den_ > 0.0 ? cs_num_ / cs_den_ : 0.0;
    r.var = var_sum_ / cd;
    r.windows = windows_;
    return r;
}

std::string EvalReport::to_csv() const {
    std::ostringstream os;
    os << "mse,mse_e,mae,crps,crps_sum,var,windows\n";
    os << fmt_double(mse) << ',' << fmt_double(mse_e) << ',' << fmt_double(mae) << ',' << fmt_double(crps) << ','
       << fmt_double(crps_sum) << ',' << fmt_double(var) << ',' << windows.size() << '\n';
    return os.str();
}

std::string EvalReport::windows_csv() const {
    std::ostringstream os;
    os << "origin,mse,mse_e,mae,crps,crps_sum,var\n";
    for (const auto& w : windows) {
        os << w.origin << ',' << fmt_double(w.mse) << ',' << fmt_double(w.mse_e) << ',' << fmt_double(w.mae) << ','
           << fmt_double(w.crps) << ',' << fmt_double(w.crps_sum) << ',' << fmt_double(w.var) << '\n';
    }
    return os.str();
}

std::string EvalReport::summary() const {
    std::ostringstream os;
    os.precision(6);
    os << "windows   " << windows.size() << "\n"
       << "MSE       " << mse << "  (single draw)\n"
       << "MSE_E     " << mse_e << "  (ensemble)\n"
       << "MAE       " << mae << "\n"
       << "CRPS      " << crps << "\n"
       << "CRPS-sum  " << crps_sum << "\n"
       << "Var       " << var << "\n";
    return os.str();
}

}  // namespace simdiff
