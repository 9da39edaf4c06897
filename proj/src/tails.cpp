#include "tailbreak/tails.hpp"

#include "tailbreak/error.hpp"
#include "text.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>

namespace tailbreak {

namespace {

constexpr double kMassTolerance = 1e-9;

std::size_t tail_count(std::size_t n, double q) {
    if (!(q > 0.0 && q < 0.5)) {
        throw Error(ErrorCode::argument, "tail fraction must lie in (0, 0.5)");
    }
    return static_cast<std::size_t>(std::floor(q * static_cast<double>(n) + 1e-9));
}

std::vector<double> stable_sorted(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::validation, "non-finite value in tail input");
        }
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::stable_sort(sorted.begin(), sorted.end());
    return sorted;
}

}  // namespace

std::string_view to_string(TailKind kind) noexcept {
    return kind == TailKind::two_sided ? "two_sided" : "upper";
}

RestrictedMeasure::RestrictedMeasure(std::vector<Atom> atoms, double total_mass, TailKind kind)
    : atoms_(std::move(atoms)), total_mass_(total_mass), kind_(kind) {
    double sum = 0.0;
    for (const auto& a : atoms_) {
        if (!(a.weight > 0.0) || !std::isfinite(a.location)) {
            throw Error(ErrorCode::validation, "atoms need finite locations and positive weights");
        }
        sum += a.weight;
    }
    if (std::abs(sum - total_mass_) > 1e-12) {
        throw Error(ErrorCode::validation, "atom weights do not sum to the total mass");
    }
    std::stable_sort(atoms_.begin(), atoms_.end(),
                     [](const Atom& a, const Atom& b) { return a.location < b.location; });
}

RestrictedMeasure restrict_two_sided(std::span<const double> values, double q) {
    const std::size_t k = tail_count(values.size(), q);
    if (k == 0) {
        throw Error(ErrorCode::insufficient_data,
                    "two-sided restriction needs at least " +
                        std::to_string(static_cast<long>(std::ceil(1.0 / q))) + " observations, got " +
                        std::to_string(values.size()));
    }
    const auto sorted = stable_sorted(values);
    const double w = q / static_cast<double>(k);
    std::vector<Atom> atoms;
    atoms.reserve(2 * k);
    for (std::size_t i = 0; i < k; ++i) {
        atoms.push_back({sorted[i], w});
    }
    for (std::size_t i = sorted.size() - k; i < sorted.size(); ++i) {
        atoms.push_back({sorted[i], w});
    }
    return RestrictedMeasure(std::move(atoms), 2.0 * q, TailKind::two_sided);
}

RestrictedMeasure restrict_upper(std::span<const double> values, double q) {
    const std::size_t m = tail_count(values.size(), q);
    if (m == 0) {
        throw Error(ErrorCode::insufficient_data,
                    "upper restriction needs at least " +
                        std::to_string(static_cast<long>(std::ceil(1.0 / q))) + " observations, got " +
                        std::to_string(values.size()));
    }
    const auto sorted = stable_sorted(values);
    const double w = q / static_cast<double>(m);
    std::vector<Atom> atoms;
    atoms.reserve(m);
    for (std::size_t i = sorted.size() - m; i < sorted.size(); ++i) {
        atoms.push_back({sorted[i], w});
    }
    return RestrictedMeasure(std::move(atoms), q, TailKind::upper);
}

RestrictedMeasure restrict(std::span<const double> values, TailKind kind, double q) {
    return kind == TailKind::two_sided ? restrict_two_sided(values, q) : restrict_upper(values, q);
}

double wasserstein1(const RestrictedMeasure& a, const RestrictedMeasure& b) {
    if (std::abs(a.total_mass() - b.total_mass()) >= kMassTolerance) {
        throw Error(ErrorCode::mass_mismatch, "Wasserstein distance needs measures of equal mass");
    }
    const auto xa = a.atoms();
    const auto xb = b.atoms();
    // Both quantile functions are step functions on [0, mass]; integrate
    // |Q_a - Q_b| between consecutive cumulative-weight breakpoints.
    std::size_t i = 0;
    std::size_t j = 0;
    double cum_a = xa.empty() ? 0.0 : xa[0].weight;
    double cum_b = xb.empty() ? 0.0 : xb[0].weight;
    double p = 0.0;
    double cost = 0.0;
    while (i < xa.size() && j < xb.size()) {
        const double next = std::min(cum_a, cum_b);
        cost += (next - p) * std::abs(xa[i].location - xb[j].location);
        p = next;
        if (cum_a <= next && ++i < xa.size()) {
            cum_a += xa[i].weight;
        }
        if (cum_b <= next && ++j < xb.size()) {
            cum_b += xb[j].weight;
        }
    }
    return cost;
}

double restricted_mean(const RestrictedMeasure& m) {
    if (!(m.total_mass() > 0.0)) {
        throw Error(ErrorCode::argument, "restricted mean needs positive mass");
    }
    double s = 0.0;
    for (const auto& a : m.atoms()) {
        s += a.weight * a.location;
    }
    return s / m.total_mass();
}

LabeledMatrix::LabeledMatrix(std::vector<std::string> labels, std::vector<double> entries)
    : labels_(std::move(labels)), entries_(std::move(entries)) {
    if (entries_.size() != labels_.size() * labels_.size()) {
        throw Error(ErrorCode::argument, "matrix entries do not match label count");
    }
}

LabeledMatrix::LabeledMatrix(std::vector<std::string> labels)
    : labels_(std::move(labels)), entries_(labels_.size() * labels_.size(), 0.0) {}

bool LabeledMatrix::is_symmetric(double tol) const {
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t j = i + 1; j < size(); ++j) {
            if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) {
                return false;
            }
        }
    }
    return true;
}

DistanceMatrix extremity_distance_matrix(const Panel& panel, TailKind kind, double q) {
    std::vector<RestrictedMeasure> measures;
    measures.reserve(panel.instruments());
    for (std::size_t i = 0; i < panel.instruments(); ++i) {
        try {
            measures.push_back(restrict(panel.row(i), kind, q));
        } catch (const Error& e) {
            throw Error(e.code(), panel.tickers()[i] + ": " + e.what());
        }
    }
    DistanceMatrix d(panel.tickers());
    for (std::size_t i = 0; i < measures.size(); ++i) {
        for (std::size_t j = i + 1; j < measures.size(); ++j) {
            const double w = wasserstein1(measures[i], measures[j]);
            d(i, j) = w;
            d(j, i) = w;
        }
    }
    return d;
}

void write_measure(std::ostream& out, const RestrictedMeasure& m, char delimiter) {
    out << "location" << delimiter << "weight\n";
    for (const auto& a : m.atoms()) {
        out << detail::format_double(a.location) << delimiter << detail::format_double(a.weight) << '\n';
    }
}

void write_matrix(std::ostream& out, const LabeledMatrix& m, char delimiter) {
    for (const auto& l : m.labels()) {
        out << delimiter << l;
    }
    out << '\n';
    for (std::size_t i = 0; i < m.size(); ++i) {
        out << m.labels()[i];
        for (std::size_t j = 0; j < m.size(); ++j) {
            out << delimiter << detail::format_double(m(i, j));
        }
        out << '\n';
    }
}

LabeledMatrix read_matrix(std::istream& in, char delimiter) {
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::parse, "empty matrix file");
    }
    auto header = detail::split(line, delimiter);
    if (header.size() < 2) {
        throw Error(ErrorCode::parse, "matrix header has no labels");
    }
    std::vector<std::string> labels;
    for (std::size_t i = 1; i < header.size(); ++i) {
        labels.push_back(detail::unquote(header[i]));
    }
    LabeledMatrix m(labels);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        const auto fields = detail::split(line, delimiter);
        if (row >= labels.size() || fields.size() != header.size() ||
            detail::unquote(fields[0]) != labels[row]) {
            throw Error(ErrorCode::parse, "malformed matrix row " + std::to_string(row + 1));
        }
        for (std::size_t j = 0; j < labels.size(); ++j) {
            if (!detail::parse_double(fields[j + 1], m(row, j))) {
                throw Error(ErrorCode::parse, "non-numeric matrix entry in row " + std::to_string(row + 1));
            }
        }
        ++row;
    }
    if (row != labels.size()) {
        throw Error(ErrorCode::parse, "matrix is not square");
    }
    return m;
}

}  // namespace tailbreak
