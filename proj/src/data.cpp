#include "simdiff/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "simdiff/errors.hpp"
#include "simdiff/format.hpp"
#include "simdiff/normalize.hpp"
#include "simdiff/rng.hpp"

namespace simdiff {

std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

std::string_view to_string(DriftKind kind) {
    switch (kind) {
        case DriftKind::trend: return "trend";
        case DriftKind::level_shift: return "level-shift";
        case DriftKind::scale_shift: return "scale-shift";
    }
    return "?";
}

DriftKind parse_drift_kind(std::string_view name) {
    if (name == "trend") return DriftKind::trend;
    if (name == "level-shift" || name == "level_shift") return DriftKind::level_shift;
    if (name == "scale-shift" || name == "scale_shift") return DriftKind::scale_shift;
    throw ConfigError("unknown drift kind '" + std::string(name) + "' (expected trend, level-shift, scale-shift)");
}

std::pair<std::size_t, std::size_t> Dataset::range(Split split) const {
    switch (split) {
        case Split::train: return {0, splits.train};
        case Split::val: return {splits.train, splits.train + splits.val};
        case Split::test: return {splits.train + splits.val, splits.train + splits.val + splits.test};
    }
    return {0, 0};
}

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    cells.push_back(trim(cur));
    return cells;
}

std::optional<double> parse_number(const std::string& cell) {
    if (cell.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = cell.data();
    const char* last = first + cell.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
    return v;
}

bool is_time_header(std::string h) {
    std::transform(h.begin(), h.end(), h.begin(), [](unsigned char c) { return std::tolower(c); });
    return h == "t" || h == "index" || h == "date" || h == "time" || h == "timestamp" || h == "datetime";
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& name) {
    std::istringstream is(text);
    std::string line;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_no;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        rows.push_back(split_row(line));
        line_no.push_back(n);
    }
    if (rows.empty()) throw ConfigError(name + ": empty file");
    if (rows.size() < 2) throw ConfigError(name + ": no data rows after header");
    const auto& header = rows[0];
    const bool skip_first = header.size() > 1 && (is_time_header(header[0]) || !parse_number(rows[1][0]).has_value());
    const std::size_t first = skip_first ? 1 : 0;
    const std::size_t m = header.size() - first;
    if (m == 0) throw ConfigError(name + ": no value columns");

    Dataset ds;
    ds.name = name;
    ds.columns.assign(header.begin() + static_cast<std::ptrdiff_t>(first), header.end());
    const std::size_t t_len = rows.size() - 1;
    ds.values = Tensor({t_len, m});
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size()) {
            throw ConfigError(name + ":" + std::to_string(line_no[r]) + ": expected " +
                              std::to_string(header.size()) + " cells, found " + std::to_string(row.size()));
        }
        for (std::size_t c = 0; c < m; ++c) {
            auto v = parse_number(row[first + c]);
            if (!v) {
                throw ConfigError(name + ":" + std::to_string(line_no[r]) + ": non-numeric value '" +
                                  row[first + c] + "' in column '" + ds.columns[c] + "'");
            }
            ds.values[(r - 1) * m + c] = *v;
        }
    }
    ds.splits = {t_len, 0, 0};
    return ds;
}

Dataset load_csv(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const std::exception&) {
        throw ConfigError("cannot read dataset file '" + path + "'");
    }
    return parse_csv(text, path);
}

std::string dataset_to_csv(const Dataset& ds) {
    std::ostringstream os;
    os << 't';
    for (const auto& c : ds.columns) os << ',' << c;
    os << '\n';
    const std::size_t m = ds.channels();
    for (std::size_t t = 0; t < ds.length(); ++t) {
        os << t;
        for (std::size_t c = 0; c < m; ++c) os << ',' << fmt_double(ds.values[t * m + c]);
        os << '\n';
    }
    return os.str();
}

SplitCounts split_from_fractions(std::size_t length, std::array<double, 3> f) {
    for (double v : f) {
        if (!(v >= 0.0)) throw ConfigError("split fractions must be nonnegative");
    }
    const double total = f[0] + f[1] + f[2];
    if (!(std::abs(total - 1.0) < 1e-9)) throw ConfigError("split fractions must sum to 1");
    SplitCounts c;
    c.train = static_cast<std::size_t>(std::floor(f[0] * static_cast<double>(length)));
    c.val = static_cast<std::size_t>(std::floor(f[1] * static_cast<double>(length)));
    c.test = length - c.train - c.val;
    return c;
}

void set_splits(Dataset& ds, SplitCounts c, std::size_t lookback, std::size_t horizon) {
    if (c.train + c.val + c.test > ds.length()) {
        throw ConfigError("split counts (" + std::to_string(c.train) + ", " + std::to_string(c.val) + ", " +
                          std::to_string(c.test) + ") exceed series length " + std::to_string(ds.length()));
    }
    const std::size_t need = lookback + horizon;
    auto check = [&](std::size_t n, const char* which) {
        if (n < need) {
            throw ConfigError(std::string(which) + " split has " + std::to_string(n) + " points, needs L + H = " +
                              std::to_string(need));
        }
    };
    check(c.train, "train");
    check(c.val, "val");
    check(c.test, "test");
    ds.splits = c;
}

std::size_t window_count(std::size_t split_len, std::size_t lookback, std::size_t horizon, std::size_t stride) {
    if (stride < 1) throw std::invalid_argument("window stride must be >= 1");
    if (split_len < lookback + horizon) return 0;
    return (split_len - lookback - horizon) / stride + 1;
}

std::vector<SeriesWindow> windows(const Dataset& ds, Split split, std::size_t lookback, std::size_t horizon,
                                  std::size_t stride) {
    const auto [begin, end] = ds.range(split);
    const std::size_t n = window_count(end - begin, lookback, horizon, stride);
    if (n == 0) {
        throw ConfigError(std::string(to_string(split)) + " split of " + std::to_string(end - begin) +
                          " points is shorter than L + H = " + std::to_string(lookback + horizon));
    }
    const std::size_t m = ds.channels();
    std::vector<SeriesWindow> out;
    out.reserve(n);
    for (std::size_t w = 0; w < n; ++w) {
        const std::size_t o = begin + w * stride;
        SeriesWindow win;
        win.origin = o;
        win.x = Tensor({lookback, m},
                       std::vector<double>(ds.values.data() + o * m, ds.values.data() + (o + lookback) * m));
        win.y = Tensor({horizon, m}, std::vector<double>(ds.values.data() + (o + lookback) * m,
                                                         ds.values.data() + (o + lookback + horizon) * m));
        out.push_back(std::move(win));
    }
    return out;
}

Standardizer fit_standardizer(const Dataset& ds) {
    const auto [begin, end] = ds.range(Split::train);
    if (end <= begin) throw ConfigError("cannot standardize: empty train split");
    const std::size_t m = ds.channels();
    Tensor block({end - begin, m},
                 std::vector<double>(ds.values.data() + begin * m, ds.values.data() + end * m));
    ChannelStats st = channel_stats(block);
    return {st.mu, st.sigma};
}

void apply_standardizer(Dataset& ds, const Standardizer& st) {
    const std::size_t m = ds.channels();
    if (st.mean.size() != m || st.scale.size() != m) throw ShapeError("standardizer channel count mismatch");
    for (std::size_t t = 0; t < ds.length(); ++t)
        for (std::size_t c = 0; c < m; ++c) ds.values[t * m + c] = (ds.values[t * m + c] - st.mean[c]) / st.scale[c];
}

Dataset synth_drift(DriftKind kind, std::size_t length, std::size_t channels, const DriftParams& p,
                    std::uint64_t seed) {
    if (length < 2) throw ConfigError("synth: series length must be >= 2");
    if (channels < 1) throw ConfigError("synth: need at least one channel");
    if (!(p.period > 0.0)) throw ConfigError("synth: period must be positive");
    if (!(p.noise >= 0.0)) throw ConfigError("synth: noise must be nonnegative");
    if (!(p.shift_at >= 0.0 && p.shift_at <= 1.0)) throw ConfigError("synth: shift_at must be in [0, 1]");
    if (!(p.scale_end > 0.0)) throw ConfigError("synth: scale_end must be positive");
    for (double v : {p.amplitude, p.slope, p.shift}) {
        if (!std::isfinite(v)) throw ConfigError("synth: parameters must be finite");
    }

    DriftTruth truth;
    truth.kind = kind;
    truth.params = p;
    truth.seed = seed;
    truth.shift_index = static_cast<std::size_t>(std::llround(p.shift_at * static_cast<double>(length)));
    CounterRng phase_rng(substream(seed, {1}));
    for (std::size_t c = 0; c < channels; ++c) truth.phase.push_back(2.0 * std::numbers::pi * phase_rng.uniform());

    Dataset ds;
    ds.name = "synth-" + std::string(to_string(kind));
    ds.values = Tensor({length, channels});
    for (std::size_t c = 0; c < channels; ++c) ds.columns.push_back("ch" + std::to_string(c));
    const double denom = static_cast<double>(length - 1);
    for (std::size_t c = 0; c < channels; ++c) {
        CounterRng noise(substream(seed, {2, c}));
        for (std::size_t t = 0; t < length; ++t) {
            const double td = static_cast<double>(t);
            double amp = p.amplitude;
            if (kind == DriftKind::scale_shift) amp *= 1.0 + (p.scale_end - 1.0) * td / denom;
            double v = amp * std::sin(2.0 * std::numbers::pi * td / p.period + truth.phase[c]);
            if (kind == DriftKind::trend) v += p.slope * td;
            if (kind == DriftKind::level_shift && t >= truth.shift_index) v += p.shift;
            if (p.noise > 0.0) v += p.noise * noise.normal();
            ds.values[t * channels + c] = v;
        }
    }
    ds.splits = {length, 0, 0};
    ds.truth = truth;
    return ds;
}

}  // namespace simdiff
