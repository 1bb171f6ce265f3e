// Concentration and relationship statistics on top of the attribution,
// clustering and payout results: market share per difficulty epoch, Gini
// coefficients, cumulative payout curves, cross-pool member overlap, tag
// enrichment of clusters, and a pool-to-actor flow graph.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "poolscope/attribution.hpp"
#include "poolscope/chain.hpp"
#include "poolscope/clustering.hpp"
#include "poolscope/csv.hpp"
#include "poolscope/errors.hpp"
#include "poolscope/payouts.hpp"

namespace poolscope {

// gini -----------------------------------------------------------------------

// mean absolute difference form, computed via the sorted linear formulation:
//   G = (2 * sum(i * x_i)) / (n * sum(x)) - (n + 1) / n    with x sorted, i from 1
inline double gini(std::vector<double> values) {
    if (values.empty()) throw Error("EmptyInput", "gini needs at least one value");
    std::sort(values.begin(), values.end());
    long double total = 0.0L;
    long double weighted = 0.0L;
    for (std::size_t i = 0; i < values.size(); ++i) {
        total += values[i];
        weighted += static_cast<long double>(i + 1) * values[i];
    }
    if (total <= 0.0L) throw Error("AllZero", "gini is undefined when all values are zero");
    auto n = static_cast<long double>(values.size());
    return static_cast<double>(2.0L * weighted / (n * total) - (n + 1.0L) / n);
}

inline double gini(const std::vector<std::int64_t>& values) {
    std::vector<double> d(values.begin(), values.end());
    return gini(std::move(d));
}

// market share per epoch -----------------------------------------------------

struct EpochStats {
    std::int64_t epoch = 0;
    std::int64_t start_height = 0;
    std::map<std::string, double> counts; // surviving entities, conflict-weighted
    std::map<std::string, double> shares;
    double other_count = 0.0;
    double unknown_count = 0.0;
    double other_share = 0.0;
    double unknown_share = 0.0;
    double gini_known = 0.0; // over attributed entities, pre-grouping
};

// Blocks with k attributed entities count 1/k toward each; unattributed blocks
// count toward Unknown. Entities below small_threshold over the whole window
// are folded into Other, so a pool's band never flickers between epochs. Only
// full bins are analyzed.
inline std::vector<EpochStats> epoch_shares(const AttributionLedger& ledger,
                                            std::int64_t bin_len = 2016,
                                            double small_threshold = 0.04) {
    if (bin_len < 1) throw Error("InvalidConfig", "bin_len must be positive");
    std::int64_t span = ledger.range.end - ledger.range.start;
    std::int64_t n_bins = span / bin_len;
    if (n_bins < 1)
        throw Error("WindowTooSmall", std::to_string(span) +
                                          " blocks cover no full bin of " +
                                          std::to_string(bin_len));

    std::vector<std::map<std::string, double>> bin_counts(n_bins);
    std::vector<double> bin_unknown(n_bins, 0.0);
    std::map<std::string, double> window_counts;
    for (std::int64_t i = 0; i < n_bins * bin_len; ++i) {
        std::int64_t height = ledger.range.start + i;
        const auto& attr = ledger.by_height.at(height);
        auto bin = i / bin_len;
        if (attr.attributions.empty()) {
            bin_unknown[bin] += 1.0;
            continue;
        }
        double w = 1.0 / static_cast<double>(attr.attributions.size());
        for (const auto& [entity, kinds] : attr.attributions) {
            (void)kinds;
            bin_counts[bin][entity] += w;
            window_counts[entity] += w;
        }
    }

    double window_blocks = static_cast<double>(n_bins * bin_len);
    std::set<std::string> small;
    for (const auto& [entity, count] : window_counts)
        if (count / window_blocks < small_threshold) small.insert(entity);

    std::vector<EpochStats> out;
    out.reserve(n_bins);
    for (std::int64_t bin = 0; bin < n_bins; ++bin) {
        EpochStats stats;
        stats.epoch = bin;
        stats.start_height = ledger.range.start + bin * bin_len;
        stats.unknown_count = bin_unknown[bin];
        std::vector<double> known;
        for (const auto& [entity, count] : bin_counts[bin]) {
            known.push_back(count);
            if (small.count(entity))
                stats.other_count += count;
            else
                stats.counts[entity] = count;
        }
        auto denom = static_cast<double>(bin_len);
        for (const auto& [entity, count] : stats.counts)
            stats.shares[entity] = count / denom;
        stats.other_share = stats.other_count / denom;
        stats.unknown_share = stats.unknown_count / denom;
        stats.gini_known = known.empty() ? 0.0 : gini(std::move(known));
        out.push_back(std::move(stats));
    }
    return out;
}

inline void write_shares_csv(const std::vector<EpochStats>& epochs,
                             const std::string& path) {
    csv::Writer out(path);
    out.row({"epoch", "start_height", "entity", "share", "gini"});
    for (const auto& e : epochs) {
        auto g = csv::format_fraction(e.gini_known);
        for (const auto& [entity, share] : e.shares)
            out.row({csv::format_i64(e.epoch), csv::format_i64(e.start_height), entity,
                     csv::format_fraction(share), g});
        if (e.other_share > 0.0)
            out.row({csv::format_i64(e.epoch), csv::format_i64(e.start_height), "Other",
                     csv::format_fraction(e.other_share), g});
        if (e.unknown_share > 0.0)
            out.row({csv::format_i64(e.epoch), csv::format_i64(e.start_height), "Unknown",
                     csv::format_fraction(e.unknown_share), g});
    }
    out.close();
}

// cumulative payout concentration --------------------------------------------

struct ConcentrationRow {
    std::int64_t rank = 0; // 1-based
    std::string cluster_id;
    std::int64_t value_sat = 0;
    double cum_fraction = 0.0;
};

struct CumulativeCurve {
    std::vector<ConcentrationRow> rows; // descending by value
    std::int64_t k_half = 0;            // smallest k with cum_fraction >= 0.5
};

inline CumulativeCurve cumulative_curve(const std::map<std::string, std::int64_t>& amounts) {
    if (amounts.empty()) throw Error("EmptyInput", "no cluster amounts");
    std::vector<std::pair<std::string, std::int64_t>> sorted(amounts.begin(), amounts.end());
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    long double total = 0.0L;
    for (const auto& [id, v] : sorted) {
        (void)id;
        total += v;
    }
    if (total <= 0.0L) throw Error("AllZero", "cluster amounts sum to zero");

    CumulativeCurve curve;
    long double running = 0.0L;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        running += sorted[i].second;
        double frac = static_cast<double>(running / total);
        curve.rows.push_back({static_cast<std::int64_t>(i + 1), sorted[i].first,
                              sorted[i].second, frac});
        if (curve.k_half == 0 && running * 2.0L >= total)
            curve.k_half = static_cast<std::int64_t>(i + 1);
    }
    return curve;
}

inline void write_concentration_csv(const CumulativeCurve& curve, const std::string& path) {
    csv::Writer out(path);
    out.row({"rank", "cluster_id", "value_sat", "cum_fraction"});
    for (const auto& r : curve.rows)
        out.row({csv::format_i64(r.rank), r.cluster_id, csv::format_i64(r.value_sat),
                 csv::format_fraction(r.cum_fraction)});
    out.close();
}

// cross-pool overlap ---------------------------------------------------------

struct OverlapRow {
    std::string pool_a;
    std::string pool_b;
    std::int64_t common_addresses = 0;
    double pct_addresses_a = 0.0; // of pool a's member addresses
    double pct_addresses_b = 0.0;
    std::int64_t common_clusters = 0;
    double pct_clusters_a = 0.0;
    double pct_clusters_b = 0.0;
    std::int64_t sat_from_a = 0; // paid by a to the common addresses
    std::int64_t sat_from_b = 0;
    double pct_paid_a = 0.0; // of pool a's total member satoshi
    double pct_paid_b = 0.0;
};

inline std::vector<OverlapRow> cross_pool_overlap(const std::vector<const PayoutSet*>& sets,
                                                  const ClusterAssignment& partition) {
    struct PoolView {
        std::string name;
        std::map<std::string, std::int64_t> totals;
        std::set<std::string> clusters;
        std::int64_t paid = 0;
    };
    std::vector<PoolView> views;
    for (const PayoutSet* set : sets) {
        PoolView v;
        v.name = set->pool;
        v.totals = set->member_totals();
        v.paid = set->member_total_sat();
        for (const auto& [addr, sat] : v.totals) {
            (void)sat;
            v.clusters.insert(partition.cluster_or_self(addr));
        }
        views.push_back(std::move(v));
    }
    std::sort(views.begin(), views.end(),
              [](const PoolView& a, const PoolView& b) { return a.name < b.name; });

    auto pct = [](std::int64_t part, std::size_t whole) {
        return whole == 0 ? 0.0
                          : 100.0 * static_cast<double>(part) / static_cast<double>(whole);
    };

    std::vector<OverlapRow> rows;
    for (std::size_t i = 0; i < views.size(); ++i) {
        for (std::size_t j = i + 1; j < views.size(); ++j) {
            const auto& a = views[i];
            const auto& b = views[j];
            OverlapRow row;
            row.pool_a = a.name;
            row.pool_b = b.name;
            for (const auto& [addr, sat_a] : a.totals) {
                auto it = b.totals.find(addr);
                if (it == b.totals.end()) continue;
                row.common_addresses += 1;
                row.sat_from_a += sat_a;
                row.sat_from_b += it->second;
            }
            for (const auto& c : a.clusters)
                if (b.clusters.count(c)) row.common_clusters += 1;
            row.pct_addresses_a = pct(row.common_addresses, a.totals.size());
            row.pct_addresses_b = pct(row.common_addresses, b.totals.size());
            row.pct_clusters_a = pct(row.common_clusters, a.clusters.size());
            row.pct_clusters_b = pct(row.common_clusters, b.clusters.size());
            row.pct_paid_a = a.paid == 0 ? 0.0
                                         : 100.0 * static_cast<double>(row.sat_from_a) /
                                               static_cast<double>(a.paid);
            row.pct_paid_b = b.paid == 0 ? 0.0
                                         : 100.0 * static_cast<double>(row.sat_from_b) /
                                               static_cast<double>(b.paid);
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline void write_overlap_csv(const std::vector<OverlapRow>& rows, const std::string& path) {
    csv::Writer out(path);
    out.row({"pool_a", "pool_b", "common_addresses", "pct_addresses_a", "pct_addresses_b",
             "common_clusters", "pct_clusters_a", "pct_clusters_b", "sat_from_a",
             "sat_from_b", "pct_paid_a", "pct_paid_b"});
    for (const auto& r : rows)
        out.row({r.pool_a, r.pool_b, csv::format_i64(r.common_addresses),
                 csv::format_pct(r.pct_addresses_a), csv::format_pct(r.pct_addresses_b),
                 csv::format_i64(r.common_clusters), csv::format_pct(r.pct_clusters_a),
                 csv::format_pct(r.pct_clusters_b), csv::format_i64(r.sat_from_a),
                 csv::format_i64(r.sat_from_b), csv::format_pct(r.pct_paid_a),
                 csv::format_pct(r.pct_paid_b)});
    out.close();
}

// tag enrichment -------------------------------------------------------------

struct TagEntry {
    std::string name;
    std::string type; // one of W, E, P, M, ?
};

// {"addr": {"name": "...", "type": "E"}}, plain string values allowed as a
// shorthand for name-only tags
inline std::map<std::string, TagEntry> load_tags(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error("UnknownSchema", path + ": " + e.what());
    }
    if (!doc.is_object()) throw Error("UnknownSchema", path + ": expected an object");
    std::map<std::string, TagEntry> tags;
    for (const auto& [addr, value] : doc.items()) {
        TagEntry entry;
        if (value.is_string()) {
            entry.name = value.get<std::string>();
            entry.type = "?";
        } else if (value.is_object() && value.contains("name") && value["name"].is_string()) {
            entry.name = value["name"].get<std::string>();
            entry.type = value.value("type", "?");
        } else {
            throw Error("UnknownSchema", path + ": bad tag for " + addr);
        }
        if (entry.name.empty())
            throw Error("UnknownSchema", path + ": empty tag name for " + addr);
        tags[addr] = std::move(entry);
    }
    return tags;
}

struct ActorRow {
    std::string name;
    std::string kind; // actor | conflict | unknown
    std::string type;
    std::int64_t n_addresses = 0;
    std::map<std::string, std::int64_t> pool_sat;
    std::int64_t total_sat = 0;
};

struct ActorTable {
    std::vector<std::string> pools; // sorted
    std::map<std::string, std::int64_t> pool_paid;
    std::vector<ActorRow> rows; // total_sat descending
    // cluster-level backing data for the flow graph and unknown inspection
    std::map<std::string, std::map<std::string, std::int64_t>> cluster_pool_sat;
    std::map<std::string, std::string> cluster_actor; // empty string = untagged
    std::map<std::string, std::set<std::string>> cluster_addresses;
};

// A cluster carries an actor name as soon as one of its addresses is tagged;
// clusters matching several actors become conflict rows, untagged clusters are
// aggregated into one Unknown row.
inline ActorTable enrich_with_tags(const ClusterAssignment& partition,
                                   const std::vector<const PayoutSet*>& sets,
                                   const std::map<std::string, TagEntry>& tags) {
    ActorTable table;
    for (const PayoutSet* set : sets) {
        table.pools.push_back(set->pool);
        table.pool_paid[set->pool] = set->member_total_sat();
    }
    std::sort(table.pools.begin(), table.pools.end());

    std::map<std::string, std::set<std::string>> cluster_names;
    std::map<std::string, std::string> name_type;
    for (const auto& [addr, entry] : tags) {
        cluster_names[partition.cluster_or_self(addr)].insert(entry.name);
        auto it = name_type.find(entry.name);
        if (it == name_type.end())
            name_type[entry.name] = entry.type;
        else if (it->second != entry.type)
            it->second = "?";
    }

    for (const PayoutSet* set : sets)
        for (const auto& [addr, sat] : set->member_totals()) {
            auto cluster = partition.cluster_or_self(addr);
            table.cluster_pool_sat[cluster][set->pool] += sat;
            table.cluster_addresses[cluster].insert(addr);
        }

    std::map<std::string, ActorRow> by_name;
    for (const auto& [cluster, pool_sat] : table.cluster_pool_sat) {
        std::string name;
        std::string kind;
        std::string type;
        auto it = cluster_names.find(cluster);
        if (it == cluster_names.end()) {
            name = "Unknown";
            kind = "unknown";
            type = "?";
        } else if (it->second.size() == 1) {
            name = *it->second.begin();
            kind = "actor";
            type = name_type.at(name);
        } else {
            name = detail::join({it->second.begin(), it->second.end()}, '|');
            kind = "conflict";
            type = "?";
        }
        table.cluster_actor[cluster] = kind == "unknown" ? "" : name;

        auto& row = by_name[kind + "\n" + name];
        row.name = name;
        row.kind = kind;
        row.type = type;
        row.n_addresses += static_cast<std::int64_t>(table.cluster_addresses.at(cluster).size());
        for (const auto& [pool, sat] : pool_sat) {
            row.pool_sat[pool] += sat;
            row.total_sat += sat;
        }
    }

    for (auto& [key, row] : by_name) {
        (void)key;
        table.rows.push_back(std::move(row));
    }
    std::sort(table.rows.begin(), table.rows.end(), [](const ActorRow& a, const ActorRow& b) {
        return a.total_sat != b.total_sat ? a.total_sat > b.total_sat : a.name < b.name;
    });
    return table;
}

inline void write_actor_table_csv(const ActorTable& table, const std::string& path) {
    csv::Writer out(path);
    std::vector<std::string> header{"actor", "kind", "type", "n_addresses", "total_sat"};
    for (const auto& pool : table.pools) {
        header.push_back(pool + "_sat");
        header.push_back(pool + "_pct");
    }
    out.row(header);
    for (const auto& row : table.rows) {
        std::vector<std::string> cells{row.name, row.kind, row.type,
                                       csv::format_i64(row.n_addresses),
                                       csv::format_i64(row.total_sat)};
        for (const auto& pool : table.pools) {
            auto it = row.pool_sat.find(pool);
            std::int64_t sat = it == row.pool_sat.end() ? 0 : it->second;
            std::int64_t paid = table.pool_paid.at(pool);
            cells.push_back(csv::format_i64(sat));
            cells.push_back(csv::format_pct(
                paid == 0 ? 0.0 : 100.0 * static_cast<double>(sat) / static_cast<double>(paid)));
        }
        out.row(cells);
    }
    out.close();
}

// unknown cluster inspection -------------------------------------------------

struct UnknownClusterRow {
    std::string cluster_id;
    std::map<std::string, std::int64_t> pool_sat;
    std::int64_t payout_total_sat = 0;
    std::int64_t lifetime_received_sat = 0; // everything the cluster ever received
};

inline std::vector<UnknownClusterRow> top_unknown(const ActorTable& table,
                                                  const ClusterAssignment& partition,
                                                  std::int64_t n,
                                                  const ChainIndex& index) {
    std::map<std::string, std::int64_t> lifetime;
    for (const auto& [addr, cluster] : partition.entries())
        if (table.cluster_actor.count(cluster) && table.cluster_actor.at(cluster).empty())
            lifetime[cluster] += index.received_total(addr);

    std::vector<UnknownClusterRow> rows;
    for (const auto& [cluster, pool_sat] : table.cluster_pool_sat) {
        if (!table.cluster_actor.at(cluster).empty()) continue;
        UnknownClusterRow row;
        row.cluster_id = cluster;
        row.pool_sat = pool_sat;
        for (const auto& [pool, sat] : pool_sat) {
            (void)pool;
            row.payout_total_sat += sat;
        }
        // fall back to the member addresses when the partition lacks the
        // cluster (a reloaded subset, for instance)
        auto it = lifetime.find(cluster);
        if (it != lifetime.end() && it->second > 0) {
            row.lifetime_received_sat = it->second;
        } else {
            for (const auto& addr : table.cluster_addresses.at(cluster))
                row.lifetime_received_sat += index.received_total(addr);
        }
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const UnknownClusterRow& a, const UnknownClusterRow& b) {
        return a.payout_total_sat != b.payout_total_sat
                   ? a.payout_total_sat > b.payout_total_sat
                   : a.cluster_id < b.cluster_id;
    });
    if (static_cast<std::int64_t>(rows.size()) > n) rows.resize(n);
    return rows;
}

inline void write_unknown_clusters_csv(const std::vector<UnknownClusterRow>& rows,
                                       const std::vector<std::string>& pools,
                                       const std::string& path) {
    csv::Writer out(path);
    std::vector<std::string> header{"cluster_id", "payout_total_sat", "lifetime_received_sat"};
    for (const auto& pool : pools) header.push_back(pool + "_sat");
    out.row(header);
    for (const auto& row : rows) {
        std::vector<std::string> cells{row.cluster_id, csv::format_i64(row.payout_total_sat),
                                       csv::format_i64(row.lifetime_received_sat)};
        for (const auto& pool : pools) {
            auto it = row.pool_sat.find(pool);
            cells.push_back(csv::format_i64(it == row.pool_sat.end() ? 0 : it->second));
        }
        out.row(cells);
    }
    out.close();
}

// flow graph -----------------------------------------------------------------

struct FlowEdge {
    std::string src;
    std::string dst;
    std::int64_t sat = 0;
};

struct FlowGraph {
    std::set<std::string> pool_nodes;
    std::set<std::string> actor_nodes; // includes Unknown when present
    std::vector<FlowEdge> edges;       // sorted by (src, dst)
    std::int64_t unknown_clusters_merged = 0;
};

// Takes the top_k clusters per pool by received satoshi and aggregates their
// payouts into pool -> actor edges, with every untagged cluster collapsing
// into a single Unknown node.
inline FlowGraph export_flow_graph(const ActorTable& table, std::int64_t top_k = 400) {
    FlowGraph graph;
    std::map<std::pair<std::string, std::string>, std::int64_t> edge_sat;
    std::set<std::string> merged_unknown;

    for (const auto& pool : table.pools) {
        std::vector<std::pair<std::string, std::int64_t>> ranked;
        for (const auto& [cluster, pool_sat] : table.cluster_pool_sat) {
            auto it = pool_sat.find(pool);
            if (it != pool_sat.end() && it->second > 0) ranked.push_back({cluster, it->second});
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        if (static_cast<std::int64_t>(ranked.size()) > top_k) ranked.resize(top_k);

        graph.pool_nodes.insert(pool);
        for (const auto& [cluster, sat] : ranked) {
            const auto& actor = table.cluster_actor.at(cluster);
            std::string dst = actor.empty() ? "Unknown" : actor;
            if (actor.empty()) merged_unknown.insert(cluster);
            edge_sat[{pool, dst}] += sat;
        }
    }

    for (const auto& [key, sat] : edge_sat) {
        graph.actor_nodes.insert(key.second);
        graph.edges.push_back({key.first, key.second, sat});
    }
    graph.unknown_clusters_merged = static_cast<std::int64_t>(merged_unknown.size());
    return graph;
}

inline void write_flow_csv(const FlowGraph& graph, const std::string& path) {
    csv::Writer out(path);
    out.row({"src", "dst", "satoshi"});
    for (const auto& e : graph.edges) out.row({e.src, e.dst, csv::format_i64(e.sat)});
    out.close();
}

namespace detail {

inline std::string dot_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    out += '"';
    return out;
}

} // namespace detail

inline void write_flow_dot(const FlowGraph& graph, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot open " + path);
    out << "digraph payouts {\n  rankdir=LR;\n";
    for (const auto& pool : graph.pool_nodes)
        out << "  " << detail::dot_quote(pool) << " [shape=box];\n";
    for (const auto& actor : graph.actor_nodes)
        out << "  " << detail::dot_quote(actor) << ";\n";
    for (const auto& e : graph.edges)
        out << "  " << detail::dot_quote(e.src) << " -> " << detail::dot_quote(e.dst)
            << " [label=" << detail::dot_quote(csv::format_i64(e.sat)) << "];\n";
    out << "}\n";
    out.close();
    if (!out) throw Error("IoError", "short write to " + path);
}

} // namespace poolscope
