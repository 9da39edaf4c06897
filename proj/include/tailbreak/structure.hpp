#pragma once

#include "tailbreak/market_data.hpp"
#include "tailbreak/tails.hpp"

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace tailbreak {

struct NormSeries {
    std::vector<Date> dates;
    std::vector<double> values;
};

// Euclidean norm of each date's cross-section.
NormSeries frobenius_vector_series(const Panel& panel);
double frobenius_matrix(const LabeledMatrix& d);

using AffinityMatrix = LabeledMatrix;

// A_ij = 1 - D_ij / max(D). Throws Error(degenerate) if max(D) == 0.
AffinityMatrix affinity(const DistanceMatrix& d);

enum class InconsistencyKind { behaviour, time };

struct InconsistencyMatrix {
    LabeledMatrix matrix;
    InconsistencyKind kind;
    std::string minuend;     // name of the first affinity
    std::string subtrahend;  // name of the second
};

// INC = A^E - A^B for the same window and series kind.
InconsistencyMatrix behaviour_inconsistency(const AffinityMatrix& a_extreme,
                                            const AffinityMatrix& a_breaks,
                                            std::string extreme_name = "extreme",
                                            std::string breaks_name = "breaks");
// INC = A_pre - A_post for the same behaviour and series kind.
InconsistencyMatrix time_inconsistency(const AffinityMatrix& a_pre, const AffinityMatrix& a_post,
                                       std::string pre_name = "pre",
                                       std::string post_name = "post");

struct AnomalyScore {
    std::string label;
    double score;
};

// a_j = sum_i |INC_ij|, sorted by descending score then label.
std::vector<AnomalyScore> anomaly_scores(const LabeledMatrix& inc);
std::vector<AnomalyScore> top_k(const std::vector<AnomalyScore>& ranking, std::size_t k);
void write_ranking(std::ostream& out, const std::vector<AnomalyScore>& ranking,
                   char delimiter = ',');

enum class Linkage { average, single, complete };

std::string_view to_string(Linkage linkage) noexcept;
Linkage parse_linkage(std::string_view name);

struct Merge {
    int a;  // cluster ids: leaves 0..n-1, merge m creates id n+m; a < b
    int b;
    double height;
    int size;
};

struct Dendrogram {
    std::vector<std::string> labels;
    std::vector<Merge> merges;
    Linkage linkage = Linkage::average;
    std::string dissimilarity;  // how the input was turned into dissimilarities
};

// Agglomerative clustering on a dissimilarity matrix (only the upper triangle
// is read). Ties are resolved toward the lexicographically smallest pair of
// cluster ids.
Dendrogram hcluster(const LabeledMatrix& dissimilarity, Linkage linkage = Linkage::average,
                    std::string dissimilarity_note = "distance");
// Clusters 1 - A.
Dendrogram hcluster_affinity(const AffinityMatrix& a, Linkage linkage = Linkage::average);
// Clusters max(INC) - INC so that strongly positive pairs merge first.
Dendrogram hcluster_inconsistency(const InconsistencyMatrix& inc,
                                  Linkage linkage = Linkage::average);

// Leaves of the cluster with the given id.
std::vector<int> cluster_leaves(const Dendrogram& d, int id);
// Leaf sets of the two children of the root, smaller side first.
std::pair<std::vector<int>, std::vector<int>> root_split(const Dendrogram& d);
// Per leaf, the height at which its cluster first joins a cluster holding more
// than half of all leaves. Outliers that stay apart from the main body get the
// largest values.
std::vector<double> separation_heights(const Dendrogram& d);

std::string to_newick(const Dendrogram& d);
std::string to_merge_json(const Dendrogram& d);

}  // namespace tailbreak
