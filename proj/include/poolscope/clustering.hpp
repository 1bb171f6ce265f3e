// Multiple-input address clustering. Spending several addresses in one
// transaction is taken as evidence of common control, so the input addresses
// of every ordinary transaction are merged into one cluster. Mixing
// transactions would glue unrelated wallets together, so anything that looks
// like a CoinJoin is skipped before merging.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "poolscope/chain.hpp"
#include "poolscope/csv.hpp"
#include "poolscope/errors.hpp"

namespace poolscope {

struct CoinJoinParams {
    // flag a tx when some output value repeats at least this many times and
    // at least as many distinct input addresses are present
    std::size_t min_equal_outputs = 3;
};

inline bool is_coinjoin(const Transaction& tx, const CoinJoinParams& params = {}) {
    if (tx.is_coinbase) return false;
    std::set<std::string> input_addrs;
    for (const auto& in : tx.inputs)
        if (!in.address.empty()) input_addrs.insert(in.address);
    if (input_addrs.size() < params.min_equal_outputs) return false;

    std::unordered_map<std::int64_t, std::size_t> value_counts;
    std::size_t max_mult = 0;
    for (const auto& out : tx.outputs) max_mult = std::max(max_mult, ++value_counts[out.value]);
    return max_mult >= params.min_equal_outputs;
}

// Union-find over interned addresses, union by size with path compression.
class ClusterPartition {
public:
    std::uint32_t intern(const std::string& addr) {
        auto [it, inserted] = ids_.try_emplace(addr, static_cast<std::uint32_t>(names_.size()));
        if (inserted) {
            names_.push_back(addr);
            parent_.push_back(it->second);
            size_.push_back(1);
        }
        return it->second;
    }

    std::optional<std::uint32_t> id_of(const std::string& addr) const {
        auto it = ids_.find(addr);
        if (it == ids_.end()) return std::nullopt;
        return it->second;
    }

    std::uint32_t find(std::uint32_t id) const {
        std::uint32_t root = id;
        while (parent_[root] != root) root = parent_[root];
        while (parent_[id] != root) {
            std::uint32_t next = parent_[id];
            parent_[id] = root;
            id = next;
        }
        return root;
    }

    void merge(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return;
        if (size_[a] < size_[b]) std::swap(a, b);
        parent_[b] = a;
        size_[a] += size_[b];
        --cluster_count_adjust_;
    }

    bool same_cluster(const std::string& a, const std::string& b) const {
        auto ia = id_of(a);
        auto ib = id_of(b);
        if (!ia || !ib) return false;
        return find(*ia) == find(*ib);
    }

    std::size_t address_count() const { return names_.size(); }
    std::size_t cluster_count() const {
        return static_cast<std::size_t>(
            static_cast<std::ptrdiff_t>(names_.size()) + cluster_count_adjust_);
    }
    const std::string& name(std::uint32_t id) const { return names_[id]; }

    // Representative of a cluster: the lexicographically smallest member, so
    // labels do not depend on the order transactions were fed in.
    std::unordered_map<std::uint32_t, std::string> representatives() const {
        std::unordered_map<std::uint32_t, std::string> reps;
        reps.reserve(cluster_count());
        for (std::uint32_t id = 0; id < names_.size(); ++id) {
            std::uint32_t root = find(id);
            auto [it, inserted] = reps.try_emplace(root, names_[id]);
            if (!inserted && names_[id] < it->second) it->second = names_[id];
        }
        return reps;
    }

    // representative -> sorted members
    std::map<std::string, std::vector<std::string>> clusters() const {
        auto reps = representatives();
        std::map<std::string, std::vector<std::string>> out;
        for (std::uint32_t id = 0; id < names_.size(); ++id)
            out[reps.at(find(id))].push_back(names_[id]);
        for (auto& [rep, members] : out) {
            (void)rep;
            std::sort(members.begin(), members.end());
        }
        return out;
    }

private:
    std::unordered_map<std::string, std::uint32_t> ids_;
    std::vector<std::string> names_;
    mutable std::vector<std::uint32_t> parent_;
    std::vector<std::uint32_t> size_;
    std::ptrdiff_t cluster_count_adjust_ = 0;
};

struct ClusterResult {
    ClusterPartition partition;
    std::vector<std::string> coinjoin_txids; // flagged txs, in feed order
    std::size_t tx_count = 0;
};

struct ClusterOptions {
    CoinJoinParams coinjoin;
    bool filter_coinjoin = true;
};

// Registers every address that appears (so untouched ones form singleton
// clusters) and merges the input addresses of ordinary transactions.
inline ClusterResult cluster_transactions(const std::vector<const Transaction*>& txs,
                                          const ClusterOptions& opts = {}) {
    ClusterResult result;
    result.tx_count = txs.size();
    std::vector<std::uint32_t> input_ids;
    for (const Transaction* tx : txs) {
        for (const auto& out : tx->outputs)
            if (!out.address.empty()) result.partition.intern(out.address);
        if (tx->is_coinbase) continue;

        input_ids.clear();
        for (const auto& in : tx->inputs)
            if (!in.address.empty()) input_ids.push_back(result.partition.intern(in.address));

        bool mixed = is_coinjoin(*tx, opts.coinjoin);
        if (mixed) result.coinjoin_txids.push_back(tx->txid);
        if (mixed && opts.filter_coinjoin) continue;
        for (std::size_t i = 1; i < input_ids.size(); ++i)
            result.partition.merge(input_ids[0], input_ids[i]);
    }
    return result;
}

inline ClusterResult cluster_chain(const Chain& chain, const ClusterOptions& opts = {}) {
    std::vector<const Transaction*> txs;
    for (const auto& block : chain.blocks)
        for (const auto& tx : block.txs) txs.push_back(&tx);
    return cluster_transactions(txs, opts);
}

// address -> cluster representative; the view the analytics side consumes,
// either straight from a partition or reloaded from clusters.csv
class ClusterAssignment {
public:
    ClusterAssignment() = default;

    explicit ClusterAssignment(const ClusterPartition& partition) {
        auto reps = partition.representatives();
        for (std::uint32_t id = 0; id < partition.address_count(); ++id)
            map_.emplace(partition.name(id), reps.at(partition.find(id)));
    }

    void insert(const std::string& addr, const std::string& cluster_id) {
        map_[addr] = cluster_id;
    }

    std::optional<std::string> find(const std::string& addr) const {
        auto it = map_.find(addr);
        if (it == map_.end()) return std::nullopt;
        return it->second;
    }

    const std::string& at(const std::string& addr) const {
        auto it = map_.find(addr);
        if (it == map_.end()) throw Error("UnknownAddress", addr);
        return it->second;
    }

    // falls back to the address itself, i.e. an unclustered singleton
    std::string cluster_or_self(const std::string& addr) const {
        auto it = map_.find(addr);
        return it == map_.end() ? addr : it->second;
    }

    std::size_t size() const { return map_.size(); }
    const std::unordered_map<std::string, std::string>& entries() const { return map_; }

private:
    std::unordered_map<std::string, std::string> map_;
};

// csv -----------------------------------------------------------------------

inline void write_clusters_csv(const ClusterPartition& partition, const std::string& path) {
    csv::Writer out(path);
    out.row({"address", "cluster_id"});
    for (const auto& [rep, members] : partition.clusters())
        for (const auto& addr : members) out.row({addr, rep});
    out.close();
}

struct ClusterSummaryRow {
    std::string cluster_id;
    std::int64_t n_addresses = 0;
    std::int64_t received_sat = 0;
};

inline std::vector<ClusterSummaryRow> summarize_clusters(const ClusterPartition& partition,
                                                         const ChainIndex& index) {
    std::vector<ClusterSummaryRow> rows;
    for (const auto& [rep, members] : partition.clusters()) {
        ClusterSummaryRow row;
        row.cluster_id = rep;
        row.n_addresses = static_cast<std::int64_t>(members.size());
        for (const auto& addr : members) row.received_sat += index.received_total(addr);
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const ClusterSummaryRow& a, const ClusterSummaryRow& b) {
        if (a.received_sat != b.received_sat) return a.received_sat > b.received_sat;
        return a.cluster_id < b.cluster_id;
    });
    return rows;
}

inline void write_cluster_summary_csv(const std::vector<ClusterSummaryRow>& rows,
                                      const std::string& path) {
    csv::Writer out(path);
    out.row({"cluster_id", "n_addresses", "received_satoshi"});
    for (const auto& row : rows)
        out.row({row.cluster_id, csv::format_i64(row.n_addresses),
                 csv::format_i64(row.received_sat)});
    out.close();
}

inline ClusterAssignment read_clusters_csv(const std::string& path) {
    csv::Table table = csv::read_file(path);
    if (table.header != std::vector<std::string>{"address", "cluster_id"})
        throw Error("UnknownSchema", path + ": not a clusters table");
    ClusterAssignment assignment;
    for (const auto& row : table.rows) {
        if (row.size() != 2) throw Error("UnknownSchema", path + ": bad row width");
        assignment.insert(row[0], row[1]);
    }
    return assignment;
}

} // namespace poolscope
