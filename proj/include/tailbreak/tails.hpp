#pragma once

#include "tailbreak/market_data.hpp"

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tailbreak {

enum class TailKind { two_sided, upper };

std::string_view to_string(TailKind kind) noexcept;

struct Atom {
    double location;
    double weight;
};

// Finite weighted atom set holding a distribution tail of fixed total mass.
// Atoms are kept sorted by location.
class RestrictedMeasure {
public:
    RestrictedMeasure(std::vector<Atom> atoms, double total_mass, TailKind kind);

    std::span<const Atom> atoms() const noexcept { return atoms_; }
    double total_mass() const noexcept { return total_mass_; }
    TailKind kind() const noexcept { return kind_; }

private:
    std::vector<Atom> atoms_;
    double total_mass_;
    TailKind kind_;
};

inline constexpr double kDefaultTwoSidedFraction = 0.05;
inline constexpr double kDefaultUpperFraction = 0.10;

// Keeps the floor(q*n) smallest and floor(q*n) largest order statistics, each
// weighted q/k. Ties are broken by original position (stable sort).
RestrictedMeasure restrict_two_sided(std::span<const double> values,
                                     double q = kDefaultTwoSidedFraction);
// Keeps the floor(q*n) largest order statistics, each weighted q/m.
RestrictedMeasure restrict_upper(std::span<const double> values, double q = kDefaultUpperFraction);
RestrictedMeasure restrict(std::span<const double> values, TailKind kind, double q);

// L1-Wasserstein distance between equal-mass measures via the quantile
// coupling: integral over [0, mass] of |Q_a(p) - Q_b(p)|.
double wasserstein1(const RestrictedMeasure& a, const RestrictedMeasure& b);

// Conditional tail mean: sum(w_i x_i) / total_mass.
double restricted_mean(const RestrictedMeasure& m);

// Square labeled matrix over the instrument collection. Used for distances,
// affinities and inconsistencies alike.
class LabeledMatrix {
public:
    LabeledMatrix() = default;
    LabeledMatrix(std::vector<std::string> labels, std::vector<double> entries);
    explicit LabeledMatrix(std::vector<std::string> labels);

    std::size_t size() const noexcept { return labels_.size(); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::span<const double> entries() const& noexcept { return entries_; }
    std::span<const double> entries() const&& = delete;

    double operator()(std::size_t i, std::size_t j) const { return entries_[i * size() + j]; }
    double& operator()(std::size_t i, std::size_t j) { return entries_[i * size() + j]; }

    bool is_symmetric(double tol = 0.0) const;

private:
    std::vector<std::string> labels_;
    std::vector<double> entries_;
};

using DistanceMatrix = LabeledMatrix;

DistanceMatrix extremity_distance_matrix(const Panel& panel, TailKind kind, double q);
inline DistanceMatrix extremity_distance_matrix(const Panel& panel, TailKind kind) {
    return extremity_distance_matrix(
        panel, kind, kind == TailKind::two_sided ? kDefaultTwoSidedFraction : kDefaultUpperFraction);
}

// Two-column "location,weight" table.
void write_measure(std::ostream& out, const RestrictedMeasure& m, char delimiter = ',');

// Header row ",t1,t2,...", then one row per label.
void write_matrix(std::ostream& out, const LabeledMatrix& m, char delimiter = ',');
LabeledMatrix read_matrix(std::istream& in, char delimiter = ',');

}  // namespace tailbreak
