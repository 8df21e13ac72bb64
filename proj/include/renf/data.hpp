#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "renf/matrix.hpp"
#include "renf/rng.hpp"

namespace renf {

constexpr double kStdClampEps = 1e-8;  // floor for zero-variance variates

/// Raw multivariate series as read from disk, in original units.
struct RawSeries {
    std::vector<std::string> timestamps;
    std::vector<std::string> columns;  // variate names, date column excluded
    Matrix values;                     // [n_steps x n_variates]

    std::size_t n_steps() const { return values.rows; }
    std::size_t n_variates() const { return values.cols; }
};

/// Chronological train/val/test ratios, e.g. (6,2,2) or (7,1,2).
struct SplitSpec {
    double train = 0.0;
    double val = 0.0;
    double test = 0.0;

    void validate() const {
        require(train > 0.0 && test > 0.0 && val >= 0.0,
                "split spec: train and test ratios must be positive");
    }
};

enum class Split { Train, Val, Test };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

/**
 * Standardized series with chronological split boundaries.
 *
 * Standardization always uses train-split statistics. Following the common
 * benchmark border convention, val/test windows may reach back across their
 * split boundary for lookback context; targets never cross forward, which the
 * span arithmetic below guarantees.
 */
struct TimeSeriesDataset {
    Matrix standardized;  // full series, z-scored with train stats
    std::vector<double> mean;
    std::vector<double> stdev;
    std::size_t train_end = 0;  // rows [0, train_end) are train
    std::size_t val_end = 0;    // rows [train_end, val_end) are val
    std::size_t lookback = 0;   // t_x
    std::size_t horizon = 0;    // L
    std::vector<std::string> warnings;

    std::size_t n_steps() const { return standardized.rows; }
    std::size_t n_variates() const { return standardized.cols; }

    /// First row of the split's window span (includes backward context).
    std::size_t span_begin(Split s) const {
        switch (s) {
            case Split::Train: return 0;
            case Split::Val: return train_end - lookback;
            default: return val_end - lookback;
        }
    }
    std::size_t span_end(Split s) const {
        switch (s) {
            case Split::Train: return train_end;
            case Split::Val: return val_end;
            default: return n_steps();
        }
    }
    std::size_t split_rows(Split s) const {
        switch (s) {
            case Split::Train: return train_end;
            case Split::Val: return val_end - train_end;
            default: return n_steps() - val_end;
        }
    }
};

/// Window-start offsets for a span of `n` steps. A window occupies
/// [start, start + t_x + L); the target block begins right after the input.
inline std::vector<std::size_t> make_windows(std::size_t n, std::size_t t_x, std::size_t L,
                                             std::size_t stride = 1) {
    require(t_x >= 1 && L >= 1 && stride >= 1, "make_windows: t_x, L, stride must be >= 1");
    std::vector<std::size_t> starts;
    if (n < t_x + L) return starts;
    const std::size_t count = (n - t_x - L) / stride + 1;
    starts.reserve(count);
    for (std::size_t i = 0; i < count; ++i) starts.push_back(i * stride);
    return starts;
}

namespace detail {

/// Strict full-cell parse with '.' decimal separator, locale-independent.
inline bool parse_cell(const std::string& cell, double& out) {
    if (cell.empty()) return false;
    const char* first = cell.data();
    const char* last = first + cell.size();
    if (*first == '+') ++first;  // from_chars rejects a leading plus
    const auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) return false;
    return std::isfinite(out);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    cells.push_back(cur);
    return cells;
}

inline bool iso_like(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c)) && c != '-' && c != ':' && c != ' ' &&
            c != 'T' && c != '/' && c != '.')
            return false;
    return true;
}

}  // namespace detail

/**
 * Loads a CSV with a header row. The named date column is excluded from the
 * value matrix; remaining columns become variates in file order.
 */
inline RawSeries load_csv(const std::string& path, const std::string& date_column = "date") {
    std::ifstream in(path);
    require(in.good(), "load_csv: cannot open file: " + path);

    std::string line;
    require(static_cast<bool>(std::getline(in, line)), "load_csv: empty file: " + path);
    const auto header = detail::split_csv_line(line);
    require(header.size() >= 2, "load_csv: need a date column plus at least one variate");

    std::size_t date_idx = 0;
    if (!date_column.empty()) {
        auto it = std::find(header.begin(), header.end(), date_column);
        require(it != header.end(), "load_csv: date column '" + date_column + "' not in header");
        date_idx = static_cast<std::size_t>(it - header.begin());
    }

    RawSeries raw;
    for (std::size_t c = 0; c < header.size(); ++c)
        if (c != date_idx) raw.columns.push_back(header[c]);
    const std::size_t n_vars = raw.columns.size();

    std::vector<double> flat;
    std::size_t row_no = 1;  // header is line 1
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv_line(line);
        require(cells.size() == header.size(),
                "load_csv: ragged row " + std::to_string(row_no) + " has " +
                    std::to_string(cells.size()) + " cells, expected " +
                    std::to_string(header.size()));
        raw.timestamps.push_back(cells[date_idx]);
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c == date_idx) continue;
            double v = 0.0;
            require(detail::parse_cell(cells[c], v),
                    "load_csv: non-numeric cell at row " + std::to_string(row_no) + ", column '" +
                        header[c] + "': '" + cells[c] + "'");
            flat.push_back(v);
        }
    }
    require(!raw.timestamps.empty(), "load_csv: no data rows in " + path);

    raw.values = Matrix(raw.timestamps.size(), n_vars);
    raw.values.data = std::move(flat);

    bool checkable = true;
    for (const auto& ts : raw.timestamps)
        if (ts.size() != raw.timestamps.front().size() || !detail::iso_like(ts)) {
            checkable = false;
            break;
        }
    if (checkable)
        for (std::size_t i = 1; i < raw.timestamps.size(); ++i)
            require(raw.timestamps[i - 1] < raw.timestamps[i],
                    "load_csv: timestamps not strictly increasing at row " + std::to_string(i + 2));
    return raw;
}

/**
 * Splits chronologically (floor for train/val, remainder to test) and
 * standardizes every split with per-variate train mean/std. Constant variates
 * get their std clamped to 1e-8 and a recorded warning.
 */
inline TimeSeriesDataset split_and_standardize(const RawSeries& raw, const SplitSpec& spec,
                                               std::size_t t_x, std::size_t L) {
    spec.validate();
    require(t_x >= 1 && L >= 1, "split_and_standardize: t_x and L must be >= 1");
    const std::size_t n = raw.n_steps();
    const double total = spec.train + spec.val + spec.test;

    TimeSeriesDataset ds;
    ds.lookback = t_x;
    ds.horizon = L;
    ds.train_end = static_cast<std::size_t>(std::floor(n * spec.train / total));
    const std::size_t n_val = static_cast<std::size_t>(std::floor(n * spec.val / total));
    ds.val_end = ds.train_end + n_val;

    require(ds.train_end >= t_x + L, "split too small for one window: train has " +
                                         std::to_string(ds.train_end) + " steps, needs " +
                                         std::to_string(t_x + L));
    if (n_val > 0)
        require(n_val >= L, "split too small for one window: val has " + std::to_string(n_val) +
                                " steps, needs " + std::to_string(L));
    require(n - ds.val_end >= L, "split too small for one window: test has " +
                                     std::to_string(n - ds.val_end) + " steps, needs " +
                                     std::to_string(L));

    const std::size_t nv = raw.n_variates();
    ds.mean.assign(nv, 0.0);
    ds.stdev.assign(nv, 0.0);
    for (std::size_t v = 0; v < nv; ++v) {
        double mu = 0.0;
        for (std::size_t t = 0; t < ds.train_end; ++t) mu += raw.values.at(t, v);
        mu /= static_cast<double>(ds.train_end);
        double var = 0.0;
        for (std::size_t t = 0; t < ds.train_end; ++t) {
            const double d = raw.values.at(t, v) - mu;
            var += d * d;
        }
        var /= static_cast<double>(ds.train_end);
        double sd = std::sqrt(var);
        if (sd < kStdClampEps) {
            sd = kStdClampEps;
            ds.warnings.push_back("variate " + std::to_string(v) +
                                  " has (near-)zero train variance; std clamped to 1e-8");
        }
        ds.mean[v] = mu;
        ds.stdev[v] = sd;
    }

    ds.standardized = Matrix(n, nv);
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t v = 0; v < nv; ++v)
            ds.standardized.at(t, v) = (raw.values.at(t, v) - ds.mean[v]) / ds.stdev[v];
    return ds;
}

/// Window-start offsets of a split in full-series coordinates.
inline std::vector<std::size_t> dataset_windows(const TimeSeriesDataset& ds, Split s,
                                                std::size_t stride = 1) {
    const std::size_t begin = ds.span_begin(s);
    const std::size_t span = ds.span_end(s) - begin;
    auto starts = make_windows(span, ds.lookback, ds.horizon, stride);
    for (auto& st : starts) st += begin;
    return starts;
}

/// One minibatch of (input, target) windows in [batch x len x var] layout.
struct WindowBatch {
    Tensor3 inputs;   // [batch x t_x x var]
    Tensor3 targets;  // [batch x L x var]
    std::vector<std::size_t> starts;

    std::size_t size() const { return starts.size(); }
};

/**
 * Deterministic batch sequence over a window list. Training iteration
 * shuffles from the seed; evaluation keeps source order. The final partial
 * batch is always emitted.
 */
class BatchIterator {
public:
    BatchIterator(const TimeSeriesDataset& ds, std::vector<std::size_t> window_starts,
                  std::size_t batch_size, bool shuffle, std::uint64_t seed,
                  std::uint64_t epoch = 0)
        : ds_(ds), order_(std::move(window_starts)), batch_size_(batch_size) {
        require(batch_size_ >= 1, "batch_iter: batch_size must be >= 1");
        if (shuffle) {
            auto rng = make_rng(seed, "shuffle", epoch);
            std::shuffle(order_.begin(), order_.end(), rng);
        }
    }

    std::size_t n_windows() const { return order_.size(); }

    std::optional<WindowBatch> next() {
        if (pos_ >= order_.size()) return std::nullopt;
        const std::size_t count = std::min(batch_size_, order_.size() - pos_);
        WindowBatch batch;
        batch.inputs = Tensor3(count, ds_.lookback, ds_.n_variates());
        batch.targets = Tensor3(count, ds_.horizon, ds_.n_variates());
        batch.starts.assign(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                            order_.begin() + static_cast<std::ptrdiff_t>(pos_ + count));
        for (std::size_t b = 0; b < count; ++b) {
            const std::size_t s = batch.starts[b];
            for (std::size_t t = 0; t < ds_.lookback; ++t)
                for (std::size_t v = 0; v < ds_.n_variates(); ++v)
                    batch.inputs.at(b, t, v) = ds_.standardized.at(s + t, v);
            for (std::size_t t = 0; t < ds_.horizon; ++t)
                for (std::size_t v = 0; v < ds_.n_variates(); ++v)
                    batch.targets.at(b, t, v) = ds_.standardized.at(s + ds_.lookback + t, v);
        }
        pos_ += count;
        return batch;
    }

    void reset() { pos_ = 0; }

private:
    const TimeSeriesDataset& ds_;
    std::vector<std::size_t> order_;
    std::size_t batch_size_;
    std::size_t pos_ = 0;
};

}  // namespace renf
