#include "tailbreak/structure.hpp"

#include "tailbreak/error.hpp"
#include "text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <tuple>

namespace tailbreak {

NormSeries frobenius_vector_series(const Panel& panel) {
    NormSeries out;
    out.dates.assign(panel.dates().begin(), panel.dates().end());
    out.values.assign(panel.length(), 0.0);
    for (std::size_t i = 0; i < panel.instruments(); ++i) {
        const auto row = panel.row(i);
        for (std::size_t t = 0; t < row.size(); ++t) {
            out.values[t] += row[t] * row[t];
        }
    }
    for (double& v : out.values) {
        v = std::sqrt(v);
    }
    return out;
}

double frobenius_matrix(const LabeledMatrix& d) {
    double s = 0.0;
    for (double v : d.entries()) {
        s += v * v;
    }
    return std::sqrt(s);
}

AffinityMatrix affinity(const DistanceMatrix& d) {
    double max = 0.0;
    for (double v : d.entries()) {
        if (v < 0.0 || !std::isfinite(v)) {
            throw Error(ErrorCode::argument, "distance entries must be finite and nonnegative");
        }
        max = std::max(max, v);
    }
    if (!(max > 0.0)) {
        throw Error(ErrorCode::degenerate, "affinity undefined: all distances are zero");
    }
    AffinityMatrix a(d.labels());
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t j = 0; j < d.size(); ++j) {
            a(i, j) = 1.0 - d(i, j) / max;
        }
    }
    return a;
}

namespace {

LabeledMatrix difference(const LabeledMatrix& lhs, const LabeledMatrix& rhs) {
    if (lhs.labels() != rhs.labels()) {
        throw Error(ErrorCode::argument, "inconsistency needs identical label sets and ordering");
    }
    LabeledMatrix out(lhs.labels());
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        for (std::size_t j = 0; j < lhs.size(); ++j) {
            out(i, j) = lhs(i, j) - rhs(i, j);
        }
    }
    return out;
}

}  // namespace

InconsistencyMatrix behaviour_inconsistency(const AffinityMatrix& a_extreme,
                                            const AffinityMatrix& a_breaks, std::string extreme_name,
                                            std::string breaks_name) {
    return {difference(a_extreme, a_breaks), InconsistencyKind::behaviour, std::move(extreme_name),
            std::move(breaks_name)};
}

InconsistencyMatrix time_inconsistency(const AffinityMatrix& a_pre, const AffinityMatrix& a_post,
                                       std::string pre_name, std::string post_name) {
    return {difference(a_pre, a_post), InconsistencyKind::time, std::move(pre_name),
            std::move(post_name)};
}

std::vector<AnomalyScore> anomaly_scores(const LabeledMatrix& inc) {
    std::vector<AnomalyScore> ranking;
    ranking.reserve(inc.size());
    for (std::size_t j = 0; j < inc.size(); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < inc.size(); ++i) {
            s += std::abs(inc(i, j));
        }
        ranking.push_back({inc.labels()[j], s});
    }
    std::stable_sort(ranking.begin(), ranking.end(), [](const AnomalyScore& a, const AnomalyScore& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.label < b.label;
    });
    return ranking;
}

std::vector<AnomalyScore> top_k(const std::vector<AnomalyScore>& ranking, std::size_t k) {
    return {ranking.begin(), ranking.begin() + static_cast<std::ptrdiff_t>(std::min(k, ranking.size()))};
}

void write_ranking(std::ostream& out, const std::vector<AnomalyScore>& ranking, char delimiter) {
    out << "label" << delimiter << "score\n";
    for (const auto& r : ranking) {
        out << r.label << delimiter << detail::format_double(r.score) << '\n';
    }
}

std::string_view to_string(Linkage linkage) noexcept {
    switch (linkage) {
        case Linkage::single: return "single";
        case Linkage::complete: return "complete";
        case Linkage::average: break;
    }
    return "average";
}

Linkage parse_linkage(std::string_view name) {
    if (name == "average") return Linkage::average;
    if (name == "single") return Linkage::single;
    if (name == "complete") return Linkage::complete;
    throw Error(ErrorCode::config, "unknown linkage '" + std::string(name) + "'");
}

Dendrogram hcluster(const LabeledMatrix& dissimilarity, Linkage linkage, std::string dissimilarity_note) {
    const std::size_t n = dissimilarity.size();
    if (n < 2) {
        throw Error(ErrorCode::argument, "clustering needs at least 2 labels");
    }
    // Working distances between active slots; slot s holds cluster ids[s].
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = dissimilarity(i, j);
            if (!std::isfinite(v)) {
                throw Error(ErrorCode::argument, "dissimilarities must be finite");
            }
            dist[i * n + j] = v;
            dist[j * n + i] = v;
        }
    }
    std::vector<int> ids(n);
    std::vector<int> sizes(n, 1);
    std::vector<std::size_t> active(n);
    for (std::size_t i = 0; i < n; ++i) {
        ids[i] = static_cast<int>(i);
        active[i] = i;
    }

    Dendrogram d;
    d.labels = dissimilarity.labels();
    d.linkage = linkage;
    d.dissimilarity = std::move(dissimilarity_note);
    d.merges.reserve(n - 1);

    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t bp = 0;
        std::size_t bq = 0;
        std::tuple<double, int, int> best{std::numeric_limits<double>::infinity(), 0, 0};
        bool found = false;
        for (std::size_t x = 0; x < active.size(); ++x) {
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                const std::size_t p = active[x];
                const std::size_t q = active[y];
                const std::tuple<double, int, int> key{dist[p * n + q], std::min(ids[p], ids[q]),
                                                       std::max(ids[p], ids[q])};
                if (!found || key < best) {
                    best = key;
                    bp = p;
                    bq = q;
                    found = true;
                }
            }
        }
        const double height = std::get<0>(best);
        const int np = sizes[bp];
        const int nq = sizes[bq];
        for (std::size_t r : active) {
            if (r == bp || r == bq) {
                continue;
            }
            const double dp = dist[bp * n + r];
            const double dq = dist[bq * n + r];
            double merged = 0.0;
            switch (linkage) {
                case Linkage::single: merged = std::min(dp, dq); break;
                case Linkage::complete: merged = std::max(dp, dq); break;
                case Linkage::average: merged = (np * dp + nq * dq) / static_cast<double>(np + nq); break;
            }
            dist[bp * n + r] = merged;
            dist[r * n + bp] = merged;
        }
        d.merges.push_back({std::get<1>(best), std::get<2>(best), height, np + nq});
        ids[bp] = static_cast<int>(n + step);
        sizes[bp] = np + nq;
        active.erase(std::find(active.begin(), active.end(), bq));
    }
    return d;
}

Dendrogram hcluster_affinity(const AffinityMatrix& a, Linkage linkage) {
    LabeledMatrix dis(a.labels());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < a.size(); ++j) {
            dis(i, j) = 1.0 - a(i, j);
        }
    }
    return hcluster(dis, linkage, "1 - affinity");
}

Dendrogram hcluster_inconsistency(const InconsistencyMatrix& inc, Linkage linkage) {
    const auto& m = inc.matrix;
    const double max = m.size() == 0 ? 0.0 : *std::max_element(m.entries().begin(), m.entries().end());
    LabeledMatrix dis(m.labels());
    for (std::size_t i = 0; i < m.size(); ++i) {
        for (std::size_t j = 0; j < m.size(); ++j) {
            dis(i, j) = max - m(i, j);
        }
    }
    return hcluster(dis, linkage, "max(inconsistency) - inconsistency");
}

namespace {

const Merge& merge_for(const Dendrogram& d, int id) {
    const auto n = static_cast<int>(d.labels.size());
    if (id < n || id >= n + static_cast<int>(d.merges.size())) {
        throw Error(ErrorCode::argument, "not an internal cluster id");
    }
    return d.merges[static_cast<std::size_t>(id - n)];
}

double node_height(const Dendrogram& d, int id) {
    return id < static_cast<int>(d.labels.size()) ? 0.0 : merge_for(d, id).height;
}

}  // namespace

std::vector<int> cluster_leaves(const Dendrogram& d, int id) {
    const auto n = static_cast<int>(d.labels.size());
    if (id < 0) {
        throw Error(ErrorCode::argument, "negative cluster id");
    }
    if (id < n) {
        return {id};
    }
    const Merge& m = merge_for(d, id);
    auto leaves = cluster_leaves(d, m.a);
    auto right = cluster_leaves(d, m.b);
    leaves.insert(leaves.end(), right.begin(), right.end());
    return leaves;
}

std::pair<std::vector<int>, std::vector<int>> root_split(const Dendrogram& d) {
    if (d.merges.empty()) {
        throw Error(ErrorCode::argument, "dendrogram has no merges");
    }
    const Merge& root = d.merges.back();
    auto a = cluster_leaves(d, root.a);
    auto b = cluster_leaves(d, root.b);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (b.size() < a.size()) {
        std::swap(a, b);
    }
    return {a, b};
}

std::vector<double> separation_heights(const Dendrogram& d) {
    const std::size_t n = d.labels.size();
    std::vector<double> heights(n, 0.0);
    std::vector<bool> assigned(n, false);
    for (std::size_t m = 0; m < d.merges.size(); ++m) {
        const auto& merge = d.merges[m];
        if (2 * static_cast<std::size_t>(merge.size) <= n) {
            continue;
        }
        for (int leaf : cluster_leaves(d, static_cast<int>(n + m))) {
            if (!assigned[static_cast<std::size_t>(leaf)]) {
                assigned[static_cast<std::size_t>(leaf)] = true;
                heights[static_cast<std::size_t>(leaf)] = merge.height;
            }
        }
    }
    return heights;
}

namespace {

std::string newick_label(const std::string& label) {
    if (label.find_first_of(" ,:;()[]'") == std::string::npos) {
        return label;
    }
    std::string quoted = "'";
    for (char c : label) {
        quoted += c;
        if (c == '\'') {
            quoted += '\'';
        }
    }
    return quoted + "'";
}

}  // namespace

std::string to_newick(const Dendrogram& d) {
    const auto n = static_cast<int>(d.labels.size());
    std::function<std::string(int)> node = [&](int id) -> std::string {
        if (id < n) {
            return newick_label(d.labels[static_cast<std::size_t>(id)]);
        }
        const Merge& m = merge_for(d, id);
        return "(" + node(m.a) + ":" + detail::format_double(m.height - node_height(d, m.a)) + "," +
               node(m.b) + ":" + detail::format_double(m.height - node_height(d, m.b)) + ")";
    };
    if (d.merges.empty()) {
        return n == 1 ? newick_label(d.labels[0]) + ";" : ";";
    }
    return node(n + static_cast<int>(d.merges.size()) - 1) + ";";
}

std::string to_merge_json(const Dendrogram& d) {
    nlohmann::ordered_json doc;
    doc["labels"] = d.labels;
    doc["linkage"] = std::string(to_string(d.linkage));
    doc["dissimilarity"] = d.dissimilarity;
    doc["merges"] = nlohmann::ordered_json::array();
    for (const auto& m : d.merges) {
        doc["merges"].push_back({{"a", m.a}, {"b", m.b}, {"height", m.height}, {"size", m.size}});
    }
    return doc.dump(2) + "\n";
}

}  // namespace tailbreak
