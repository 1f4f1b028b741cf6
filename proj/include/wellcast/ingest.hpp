#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wellcast/date.hpp"
#include "wellcast/error.hpp"

namespace wellcast {

inline constexpr std::string_view kDateColumn = "DATEPRD";

/// Columns the CSV reader recognizes. Historical measurements carry `_H`.
inline const std::vector<std::string>& recognized_columns() {
    static const std::vector<std::string> cols{"OPR_H", "WPR_H", "GPR_H", "BHP_H",
                                               "OPR",   "WPR",   "GPR",   "BHP"};
    return cols;
}

using Cell = std::optional<double>;

struct Column {
    std::string name;
    std::string unit;
    std::vector<Cell> values;
};

/// Date-indexed multivariate table with explicit missing cells.
class SeriesFrame {
public:
    SeriesFrame() = default;
    explicit SeriesFrame(std::vector<Date> index) : index_(std::move(index)) {}

    std::size_t rows() const noexcept { return index_.size(); }
    bool empty() const noexcept { return index_.empty(); }
    const std::vector<Date>& index() const noexcept { return index_; }
    const std::vector<Column>& columns() const noexcept { return columns_; }

    bool has(std::string_view name) const { return find(name) != nullptr; }

    const Column& column(std::string_view name) const {
        if (const Column* c = find(name)) return *c;
        throw SchemaError("no column '" + std::string(name) + "'");
    }
    Column& column(std::string_view name) {
        if (Column* c = find(name)) return *c;
        throw SchemaError("no column '" + std::string(name) + "'");
    }

    void add_column(std::string name, std::vector<Cell> values, std::string unit = {}) {
        if (values.size() != index_.size()) {
            throw DataError("column '" + name + "' has " + std::to_string(values.size()) +
                            " values for " + std::to_string(index_.size()) + " rows");
        }
        if (has(name)) throw DataError("duplicate column '" + name + "'");
        columns_.push_back(Column{std::move(name), std::move(unit), std::move(values)});
    }

    void add_column(std::string name, const std::vector<double>& values, std::string unit = {}) {
        add_column(std::move(name), std::vector<Cell>(values.begin(), values.end()), std::move(unit));
    }

    /// Observed values of a fully observed column; throws when any cell is missing.
    std::vector<double> dense(std::string_view name) const {
        const Column& c = column(name);
        std::vector<double> out;
        out.reserve(c.values.size());
        for (std::size_t r = 0; r < c.values.size(); ++r) {
            if (!c.values[r]) {
                throw DataError("column '" + c.name + "' is missing a value at " +
                                index_[r].to_string());
            }
            out.push_back(*c.values[r]);
        }
        return out;
    }

    std::size_t missing_count(std::string_view name) const {
        const auto& v = column(name).values;
        return static_cast<std::size_t>(std::count(v.begin(), v.end(), std::nullopt));
    }

    /// Rows [first, last) as a new frame.
    SeriesFrame slice(std::size_t first, std::size_t last) const {
        SeriesFrame out(std::vector<Date>(index_.begin() + first, index_.begin() + last));
        for (const Column& c : columns_) {
            out.columns_.push_back(Column{c.name, c.unit,
                                          std::vector<Cell>(c.values.begin() + first,
                                                            c.values.begin() + last)});
        }
        return out;
    }

    /// Rows of `other` appended after this frame's rows. Columns must match.
    SeriesFrame concat(const SeriesFrame& other) const {
        if (!index_.empty() && !other.index_.empty() && other.index_.front() <= index_.back()) {
            throw DataError("concatenated frame must start after " + index_.back().to_string());
        }
        SeriesFrame out(index_);
        out.index_.insert(out.index_.end(), other.index_.begin(), other.index_.end());
        for (const Column& c : columns_) {
            const Column& o = other.column(c.name);
            Column merged{c.name, c.unit, c.values};
            merged.values.insert(merged.values.end(), o.values.begin(), o.values.end());
            out.columns_.push_back(std::move(merged));
        }
        return out;
    }

    /// Checks the structural invariants: strictly increasing index and
    /// column lengths matching the index.
    void validate(bool require_daily = false) const {
        for (std::size_t r = 1; r < index_.size(); ++r) {
            if (index_[r] <= index_[r - 1]) {
                throw DataError("index not strictly increasing at " + index_[r].to_string());
            }
            if (require_daily && index_[r] - index_[r - 1] != 1) {
                throw DataError("index not daily at " + index_[r].to_string());
            }
        }
        for (const Column& c : columns_) {
            if (c.values.size() != index_.size()) {
                throw DataError("column '" + c.name + "' length mismatch");
            }
        }
    }

    bool operator==(const SeriesFrame& o) const {
        if (index_ != o.index_ || columns_.size() != o.columns_.size()) return false;
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            const Column& a = columns_[i];
            const Column& b = o.columns_[i];
            if (a.name != b.name || a.unit != b.unit || a.values.size() != b.values.size()) {
                return false;
            }
            for (std::size_t r = 0; r < a.values.size(); ++r) {
                if (a.values[r].has_value() != b.values[r].has_value()) return false;
                if (a.values[r] && std::bit_cast<std::uint64_t>(*a.values[r]) !=
                                       std::bit_cast<std::uint64_t>(*b.values[r])) {
                    return false;
                }
            }
        }
        return true;
    }

private:
    const Column* find(std::string_view name) const {
        for (const Column& c : columns_) {
            if (c.name == name) return &c;
        }
        return nullptr;
    }
    Column* find(std::string_view name) {
        return const_cast<Column*>(std::as_const(*this).find(name));
    }

    std::vector<Date> index_;
    std::vector<Column> columns_;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == ',' && !quoted) {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    out.push_back(trim(line.substr(start)));
    return out;
}

inline Cell parse_cell(std::string_view s) {
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace detail

/// Reads a well CSV. The header must contain `DATEPRD` and every schema
/// column; other columns are ignored. Lines starting with `#` are comments.
/// Unparseable numeric cells become missing.
inline SeriesFrame parse_csv(std::istream& source, std::span<const std::string> schema,
                             const std::map<std::string, std::string>& units = {}) {
    std::string line;
    std::vector<std::string_view> header;
    std::string header_line;
    while (std::getline(source, line)) {
        if (detail::trim(line).empty() || line.front() == '#') continue;
        header_line = line;
        break;
    }
    if (header_line.empty()) throw SchemaError("CSV has no header row");
    if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        header_line.erase(0, 3);
    }
    header = detail::split_fields(header_line);

    auto locate = [&](std::string_view name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw SchemaError("CSV header lacks required column '" + std::string(name) + "'");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t date_col = locate(kDateColumn);
    std::vector<std::size_t> positions;
    for (const std::string& name : schema) positions.push_back(locate(name));

    std::vector<std::pair<Date, std::vector<Cell>>> rows;
    std::size_t line_no = 1;
    while (std::getline(source, line)) {
        ++line_no;
        if (detail::trim(line).empty() || line.front() == '#') continue;
        const auto fields = detail::split_fields(line);
        if (fields.size() <= date_col) {
            throw DataError("line " + std::to_string(line_no) + " has no date field");
        }
        std::vector<Cell> cells;
        cells.reserve(positions.size());
        for (std::size_t p : positions) {
            cells.push_back(p < fields.size() ? detail::parse_cell(fields[p]) : std::nullopt);
        }
        rows.emplace_back(Date::parse(fields[date_col]), std::move(cells));
    }

    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].first == rows[r - 1].first) {
            throw DataError("duplicate date " + rows[r].first.to_string());
        }
    }

    std::vector<Date> index;
    index.reserve(rows.size());
    for (const auto& r : rows) index.push_back(r.first);
    SeriesFrame frame(std::move(index));
    for (std::size_t c = 0; c < schema.size(); ++c) {
        std::vector<Cell> values;
        values.reserve(rows.size());
        for (const auto& r : rows) values.push_back(r.second[c]);
        const auto u = units.find(schema[c]);
        frame.add_column(schema[c], std::move(values), u == units.end() ? "" : u->second);
    }
    return frame;
}

inline SeriesFrame parse_csv(const std::string& text, std::span<const std::string> schema) {
    std::istringstream in(text);
    return parse_csv(in, schema);
}

/// Column names of a CSV header that are in the recognized set, in header order.
inline std::vector<std::string> recognized_header_columns(std::istream& source) {
    std::string line;
    while (std::getline(source, line)) {
        if (detail::trim(line).empty() || line.front() == '#') continue;
        std::vector<std::string> out;
        for (std::string_view f : detail::split_fields(line)) {
            const auto& rec = recognized_columns();
            if (std::find(rec.begin(), rec.end(), f) != rec.end()) out.emplace_back(f);
        }
        return out;
    }
    return {};
}

/// Writes the frame in the format parse_csv reads. `preamble` lines are
/// emitted as `#` comments before the header.
inline void write_csv(std::ostream& out, const SeriesFrame& frame,
                      std::span<const std::string> preamble = {}) {
    for (const std::string& p : preamble) out << "# " << p << '\n';
    out << kDateColumn;
    for (const Column& c : frame.columns()) out << ',' << c.name;
    out << '\n';
    for (std::size_t r = 0; r < frame.rows(); ++r) {
        out << frame.index()[r].to_string();
        for (const Column& c : frame.columns()) {
            out << ',';
            if (c.values[r]) out << detail::format_double(*c.values[r]);
        }
        out << '\n';
    }
}

/// Expands the index to every calendar day between the first and last date;
/// inserted days are all-missing.
inline SeriesFrame resample_daily(const SeriesFrame& frame) {
    if (frame.empty()) throw DataError("cannot resample an empty frame");
    frame.validate();
    const Date first = frame.index().front();
    const std::size_t n = static_cast<std::size_t>(frame.index().back() - first) + 1;
    std::vector<Date> index(n);
    for (std::size_t i = 0; i < n; ++i) index[i] = first + static_cast<int>(i);
    SeriesFrame out(std::move(index));
    for (const Column& c : frame.columns()) {
        std::vector<Cell> values(n);
        for (std::size_t r = 0; r < frame.rows(); ++r) {
            values[static_cast<std::size_t>(frame.index()[r] - first)] = c.values[r];
        }
        out.add_column(c.name, std::move(values), c.unit);
    }
    return out;
}

/// Fills missing cells in `columns` from the k nearest rows.
///
/// Distance between rows a and b is sqrt((D / D_obs) * sum over shared
/// coordinates of (a_i - b_i)^2), where D is the number of selected columns
/// and D_obs the number observed in both rows. Rows sharing no observed
/// coordinate are not neighbors. For each missing cell the donors are the
/// rows observing that column; the k closest (lower row index on ties)
/// contribute an unweighted mean. A row with no observed selected value
/// takes the column mean. Distances use the input values only, never
/// values imputed earlier in the same call.
inline SeriesFrame knn_impute(const SeriesFrame& frame, std::size_t k,
                              std::span<const std::string> columns) {
    if (k == 0) throw ImputationError("k must be >= 1");
    const std::size_t n = frame.rows();
    const std::size_t dims = columns.size();
    std::vector<const Column*> cols;
    for (const std::string& name : columns) cols.push_back(&frame.column(name));

    std::vector<double> col_mean(dims, 0.0);
    bool any_complete = false;
    for (std::size_t d = 0; d < dims; ++d) {
        double sum = 0.0;
        std::size_t count = 0;
        for (const Cell& v : cols[d]->values) {
            if (v) {
                sum += *v;
                ++count;
            }
        }
        if (count == 0) {
            throw ImputationError("column '" + cols[d]->name + "' has no observed values");
        }
        col_mean[d] = sum / static_cast<double>(count);
    }
    for (std::size_t r = 0; r < n && !any_complete; ++r) {
        any_complete = std::all_of(cols.begin(), cols.end(),
                                   [r](const Column* c) { return c->values[r].has_value(); });
    }
    if (n > 0 && !any_complete) {
        throw ImputationError("no row is fully observed in the selected columns");
    }

    SeriesFrame out = frame;
    std::vector<std::pair<double, std::size_t>> candidates;
    candidates.reserve(n);
    for (std::size_t r = 0; r < n; ++r) {
        std::size_t observed = 0;
        for (const Column* c : cols) observed += c->values[r].has_value() ? 1 : 0;
        if (observed == dims) continue;

        // Distance to every other row, or +inf when no coordinate is shared.
        std::vector<double> dist(n, std::numeric_limits<double>::infinity());
        if (observed > 0) {
            for (std::size_t o = 0; o < n; ++o) {
                if (o == r) continue;
                double sq = 0.0;
                std::size_t shared = 0;
                for (const Column* c : cols) {
                    if (c->values[r] && c->values[o]) {
                        const double diff = *c->values[r] - *c->values[o];
                        sq += diff * diff;
                        ++shared;
                    }
                }
                if (shared > 0) {
                    dist[o] = std::sqrt(static_cast<double>(dims) / static_cast<double>(shared) * sq);
                }
            }
        }

        for (std::size_t d = 0; d < dims; ++d) {
            if (cols[d]->values[r]) continue;
            double fill = col_mean[d];
            if (observed > 0) {
                candidates.clear();
                for (std::size_t o = 0; o < n; ++o) {
                    if (cols[d]->values[o] && std::isfinite(dist[o])) candidates.emplace_back(dist[o], o);
                }
                if (candidates.empty()) {
                    throw ImputationError("row " + std::to_string(r) + " (" +
                                          frame.index()[r].to_string() +
                                          ") has no eligible neighbor for column '" +
                                          cols[d]->name + "'");
                }
                const std::size_t take = std::min(k, candidates.size());
                std::partial_sort(candidates.begin(), candidates.begin() + take, candidates.end());
                double sum = 0.0;
                for (std::size_t i = 0; i < take; ++i) sum += *cols[d]->values[candidates[i].second];
                fill = sum / static_cast<double>(take);
            }
            out.column(cols[d]->name).values[r] = fill;
        }
    }
    return out;
}

struct SplitSpec {
    double train_fraction = 0.8;
    Date oos_start;
    Date oos_end;
};

struct Split {
    SeriesFrame train;
    SeriesFrame test;
    SeriesFrame oos;
};

/// Chronological split. The out-of-sample window must sit at the tail of
/// the frame; the rows before it are divided into train and test with
/// floor(train_fraction * n) training rows.
inline Split split(const SeriesFrame& frame, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw SplitError("train_fraction must be in (0, 1)");
    }
    if (spec.oos_end < spec.oos_start) throw SplitError("oos_end precedes oos_start");
    if (frame.empty()) throw SplitError("cannot split an empty frame");
    const auto& idx = frame.index();
    if (spec.oos_start <= idx.front() || spec.oos_end > idx.back()) {
        throw SplitError("oos window [" + spec.oos_start.to_string() + ", " +
                         spec.oos_end.to_string() + "] is outside the frame range or leaves no "
                         "history before it");
    }
    if (spec.oos_end < idx.back()) {
        throw SplitError("rows after oos_end " + spec.oos_end.to_string() +
                         " would overlap the train/test range; the oos window must end the frame");
    }
    const std::size_t oos_first = static_cast<std::size_t>(
        std::lower_bound(idx.begin(), idx.end(), spec.oos_start) - idx.begin());
    const std::size_t n_train = static_cast<std::size_t>(
        std::floor(spec.train_fraction * static_cast<double>(oos_first)));
    if (n_train == 0 || n_train == oos_first) {
        throw SplitError("split of " + std::to_string(oos_first) +
                         " pre-oos rows leaves an empty train or test part");
    }
    return Split{frame.slice(0, n_train), frame.slice(n_train, oos_first),
                 frame.slice(oos_first, frame.rows())};
}

}  // namespace wellcast
