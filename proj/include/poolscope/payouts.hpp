// Payout pattern detectors. Each detector reconstructs a pool's payout
// transactions from a structural fingerprint and splits their outputs into
// member payouts and pool-side change:
//
//   collector chain  : one long-lived collector address funds every payout
//                      and receives its change (so the chain is found by
//                      looking at everything that touches the collector)
//   fixed outputs    : every payout has an exact output count; the change
//                      output is fresh each time and is spent by the next
//                      payout, so the chain is walked by spend linkage with a
//                      largest-output fallback for the terminal transaction
//   fanout           : members are paid in outputs of one exact amount from
//                      the pool's reward addresses
//
// Detection is heuristic on purpose; everything suspicious is surfaced in the
// result (broken chain segments, relaxed matches, missing change) instead of
// aborting.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "poolscope/attribution.hpp"
#include "poolscope/chain.hpp"
#include "poolscope/clustering.hpp"
#include "poolscope/csv.hpp"
#include "poolscope/errors.hpp"
#include "poolscope/log.hpp"

namespace poolscope {

struct DetectorParams {
    std::string pool;
    std::vector<std::string> reward_addresses;
    std::string collector_address;     // collector chain
    std::int64_t exact_outputs = 101;  // fixed outputs chain
    std::int64_t min_outputs = 0;      // relaxed threshold, 0 disables
    std::int64_t fanout_amount_sat = 0;
    HeightRange window{0, 0}; // {0,0} means the whole chain
    std::int64_t max_chain_length = 1000000;
};

struct MemberOutput {
    std::string txid;
    std::int64_t vout = 0;
    std::string address;
    std::int64_t value = 0;
    std::int64_t height = 0;
};

struct ChangeRef {
    std::string txid;
    std::int64_t vout = -1; // -1 when no change output was identified
};

struct PayoutSet {
    std::string pool;
    HeightRange window{0, 0};
    std::vector<std::string> payout_txids; // chain order
    std::map<std::string, std::int64_t> tx_heights;
    std::vector<MemberOutput> member_outputs;
    std::vector<ChangeRef> change_outputs; // aligned with payout_txids
    std::vector<std::string> ambiguous_txids;
    std::vector<std::string> broken_txids;
    std::vector<std::string> relaxed_txids;

    std::int64_t member_total_sat() const {
        std::int64_t s = 0;
        for (const auto& m : member_outputs) s += m.value;
        return s;
    }
    std::map<std::string, std::int64_t> member_totals() const {
        std::map<std::string, std::int64_t> out;
        for (const auto& m : member_outputs) out[m.address] += m.value;
        return out;
    }
    // distinct payout transactions per member address
    std::map<std::string, std::int64_t> member_tx_counts() const {
        std::map<std::string, std::set<std::string>> txs;
        for (const auto& m : member_outputs) txs[m.address].insert(m.txid);
        std::map<std::string, std::int64_t> out;
        for (const auto& [addr, set] : txs)
            out[addr] = static_cast<std::int64_t>(set.size());
        return out;
    }
};

namespace detail {

inline HeightRange effective_window(const Chain& chain, const DetectorParams& params) {
    if (params.window.start == 0 && params.window.end == 0)
        return {chain.start_height(), chain.end_height()};
    return params.window;
}

inline std::string outpoint_key(const std::string& txid, std::int64_t vout) {
    return txid + ":" + std::to_string(vout);
}

// (txid, vout) -> transaction that spends it, restricted to the window
inline std::unordered_map<std::string, const Transaction*>
build_spender_index(const Chain& chain, const HeightRange& window) {
    std::unordered_map<std::string, const Transaction*> spender;
    for (const auto& block : chain.blocks) {
        if (!window.contains(block.height)) continue;
        for (const auto& tx : block.txs) {
            if (tx.is_coinbase) continue;
            for (const auto& in : tx.inputs)
                spender.emplace(outpoint_key(in.prev_txid, in.prev_vout), &tx);
        }
    }
    return spender;
}

inline void collect_members(const Transaction& tx, std::int64_t height,
                            std::int64_t change_vout,
                            const std::set<std::string>& pool_addrs,
                            PayoutSet& out) {
    for (std::size_t v = 0; v < tx.outputs.size(); ++v) {
        if (static_cast<std::int64_t>(v) == change_vout) continue;
        const auto& o = tx.outputs[v];
        if (o.address.empty() || pool_addrs.count(o.address)) continue;
        out.member_outputs.push_back(
            {tx.txid, static_cast<std::int64_t>(v), o.address, o.value, height});
    }
}

} // namespace detail

// collector chain ------------------------------------------------------------

inline PayoutSet detect_collector_chain(const Chain& chain, const DetectorParams& params) {
    if (params.collector_address.empty())
        throw Error("InvalidConfig", "collector_address is required");
    PayoutSet result;
    result.pool = params.pool;
    result.window = detail::effective_window(chain, params);

    std::unordered_set<std::string> touching;
    auto rec = chain.index.received_by.find(params.collector_address);
    if (rec != chain.index.received_by.end())
        for (const auto& r : rec->second) touching.insert(r.txid);
    auto spent = chain.index.spent_by.find(params.collector_address);
    if (spent != chain.index.spent_by.end())
        for (const auto& txid : spent->second) touching.insert(txid);
    if (touching.empty())
        throw Error("CollectorNotFound",
                    params.collector_address + " never appears in the chain");

    std::set<std::string> pool_addrs(params.reward_addresses.begin(),
                                     params.reward_addresses.end());
    pool_addrs.insert(params.collector_address);

    for (const auto& block : chain.blocks) {
        if (!result.window.contains(block.height)) continue;
        for (const auto& tx : block.txs) {
            if (tx.is_coinbase || !touching.count(tx.txid)) continue;
            std::int64_t change_vout = -1;
            for (std::size_t v = 0; v < tx.outputs.size(); ++v)
                if (tx.outputs[v].address == params.collector_address) {
                    change_vout = static_cast<std::int64_t>(v);
                    break;
                }
            result.payout_txids.push_back(tx.txid);
            result.tx_heights[tx.txid] = block.height;
            result.change_outputs.push_back({tx.txid, change_vout});
            detail::collect_members(tx, block.height, change_vout, pool_addrs, result);
        }
    }
    return result;
}

// fixed outputs chain --------------------------------------------------------

inline PayoutSet detect_fixed_outputs_chain(const Chain& chain,
                                            const DetectorParams& params) {
    if (params.reward_addresses.empty())
        throw Error("InvalidConfig", "reward_addresses are required");
    if (params.exact_outputs < 2)
        throw Error("InvalidConfig", "exact_outputs must be at least 2");
    PayoutSet result;
    result.pool = params.pool;
    result.window = detail::effective_window(chain, params);

    std::set<std::string> pool_addrs(params.reward_addresses.begin(),
                                     params.reward_addresses.end());

    auto shape_ok = [&](const Transaction& tx, bool& relaxed) {
        auto n = static_cast<std::int64_t>(tx.outputs.size());
        if (n == params.exact_outputs) {
            relaxed = false;
            return true;
        }
        if (params.min_outputs > 0 && n >= params.min_outputs) {
            relaxed = true;
            return true;
        }
        return false;
    };

    auto spender = detail::build_spender_index(chain, result.window);

    // chain starts: qualifying txs that spend a reward address directly
    std::vector<const Transaction*> candidates;
    std::unordered_map<std::string, std::int64_t> heights;
    for (const auto& block : chain.blocks) {
        if (!result.window.contains(block.height)) continue;
        for (const auto& tx : block.txs) {
            if (tx.is_coinbase) continue;
            bool spends_reward = false;
            for (const auto& in : tx.inputs)
                if (pool_addrs.count(in.address)) {
                    spends_reward = true;
                    break;
                }
            if (!spends_reward) continue;
            bool relaxed = false;
            if (!shape_ok(tx, relaxed)) continue;
            candidates.push_back(&tx);
            heights[tx.txid] = block.height;
        }
    }

    std::unordered_set<std::string> visited;
    for (const Transaction* start : candidates) {
        if (visited.count(start->txid)) continue;
        if (!result.payout_txids.empty()) {
            // a fresh start after a finished walk means the spend linkage
            // broke somewhere; keep going but leave a trace
            result.broken_txids.push_back(result.payout_txids.back());
            log::warn("payout chain for " + params.pool + " restarts at " + start->txid);
        }
        const Transaction* current = start;
        std::int64_t steps = 0;
        while (current != nullptr && ++steps <= params.max_chain_length) {
            visited.insert(current->txid);
            std::int64_t height = heights.count(current->txid)
                                      ? heights.at(current->txid)
                                      : chain.index.height_of(current->txid);
            bool relaxed = false;
            shape_ok(*current, relaxed);
            if (relaxed) result.relaxed_txids.push_back(current->txid);

            // change output: the one spent by the next qualifying payout; a
            // spender that also draws on a reward address is the stronger
            // match, shape alone is only accepted when nothing better exists
            std::int64_t change_vout = -1;
            const Transaction* next = nullptr;
            std::int64_t weak_vout = -1;
            const Transaction* weak_next = nullptr;
            for (std::size_t v = 0; v < current->outputs.size() && next == nullptr; ++v) {
                auto it = spender.find(
                    detail::outpoint_key(current->txid, static_cast<std::int64_t>(v)));
                if (it == spender.end()) continue;
                const Transaction* cand = it->second;
                if (visited.count(cand->txid)) continue;
                bool cand_relaxed = false;
                if (!shape_ok(*cand, cand_relaxed)) continue;
                bool cand_spends_reward = false;
                for (const auto& in : cand->inputs)
                    if (pool_addrs.count(in.address)) {
                        cand_spends_reward = true;
                        break;
                    }
                if (cand_spends_reward) {
                    change_vout = static_cast<std::int64_t>(v);
                    next = cand;
                } else if (weak_next == nullptr) {
                    weak_vout = static_cast<std::int64_t>(v);
                    weak_next = cand;
                }
            }
            if (next == nullptr && weak_next != nullptr) {
                change_vout = weak_vout;
                next = weak_next;
            }
            if (next == nullptr) {
                // terminal payout: fall back to the largest output
                std::int64_t best = -1;
                std::int64_t best_value = -1;
                for (std::size_t v = 0; v < current->outputs.size(); ++v)
                    if (current->outputs[v].value > best_value) {
                        best_value = current->outputs[v].value;
                        best = static_cast<std::int64_t>(v);
                    }
                change_vout = best;
            }
            result.payout_txids.push_back(current->txid);
            result.tx_heights[current->txid] = height;
            result.change_outputs.push_back({current->txid, change_vout});
            detail::collect_members(*current, height, change_vout, pool_addrs, result);
            current = next;
        }
    }
    return result;
}

// fanout ---------------------------------------------------------------------

inline PayoutSet detect_fanout(const Chain& chain, const DetectorParams& params) {
    if (params.reward_addresses.empty())
        throw Error("InvalidConfig", "reward_addresses are required");
    if (params.fanout_amount_sat < 1)
        throw Error("InvalidConfig", "fanout_amount_sat is required");
    PayoutSet result;
    result.pool = params.pool;
    result.window = detail::effective_window(chain, params);

    std::set<std::string> pool_addrs(params.reward_addresses.begin(),
                                     params.reward_addresses.end());
    std::int64_t min_hits = std::max<std::int64_t>(1, params.min_outputs);

    for (const auto& block : chain.blocks) {
        if (!result.window.contains(block.height)) continue;
        for (const auto& tx : block.txs) {
            if (tx.is_coinbase) continue;
            bool spends_reward = false;
            for (const auto& in : tx.inputs)
                if (pool_addrs.count(in.address)) {
                    spends_reward = true;
                    break;
                }
            if (!spends_reward) continue;

            std::int64_t exact_hits = 0;
            for (const auto& o : tx.outputs)
                if (o.value == params.fanout_amount_sat && !pool_addrs.count(o.address))
                    ++exact_hits;
            if (exact_hits < min_hits) continue;

            // change: an output back to a pool address, or any non-exact rest
            std::int64_t change_vout = -1;
            for (std::size_t v = 0; v < tx.outputs.size() && change_vout < 0; ++v)
                if (pool_addrs.count(tx.outputs[v].address))
                    change_vout = static_cast<std::int64_t>(v);
            for (std::size_t v = 0; v < tx.outputs.size() && change_vout < 0; ++v)
                if (tx.outputs[v].value != params.fanout_amount_sat)
                    change_vout = static_cast<std::int64_t>(v);
            if (change_vout < 0) result.ambiguous_txids.push_back(tx.txid);

            result.payout_txids.push_back(tx.txid);
            result.tx_heights[tx.txid] = block.height;
            result.change_outputs.push_back({tx.txid, change_vout});
            for (std::size_t v = 0; v < tx.outputs.size(); ++v) {
                if (static_cast<std::int64_t>(v) == change_vout) continue;
                const auto& o = tx.outputs[v];
                if (o.address.empty() || pool_addrs.count(o.address)) continue;
                if (o.value != params.fanout_amount_sat) continue;
                result.member_outputs.push_back(
                    {tx.txid, static_cast<std::int64_t>(v), o.address, o.value, block.height});
            }
        }
    }
    return result;
}

// summary statistics ---------------------------------------------------------

struct PayoutStats {
    std::string pool;
    std::int64_t n_blocks = 0;       // blocks attributed to the pool
    std::int64_t n_txs = 0;          // payout transactions
    std::int64_t n_addresses = 0;    // distinct member addresses
    std::int64_t n_clusters = 0;     // distinct clusters over those addresses
    std::int64_t mined_sat = 0;
    std::int64_t paid_sat = 0;
    double coverage = 0.0;           // paid / mined
    double median_payouts = 0.0;     // median payout txs per member address
    double median_over_addresses = 0.0;
};

inline PayoutStats payout_stats(const PayoutSet& set, const AttributionLedger& ledger,
                                const ClusterAssignment& clusters) {
    if ((set.window.start != 0 || set.window.end != 0) &&
        (set.window.start != ledger.range.start || set.window.end != ledger.range.end))
        throw Error("WindowMismatch",
                    "payouts cover [" + std::to_string(set.window.start) + ", " +
                        std::to_string(set.window.end) + ") but attribution covers [" +
                        std::to_string(ledger.range.start) + ", " +
                        std::to_string(ledger.range.end) + ")");

    PayoutStats stats;
    stats.pool = set.pool;
    stats.n_txs = static_cast<std::int64_t>(set.payout_txids.size());

    for (const auto& [height, attr] : ledger.by_height) {
        if (!attr.attributions.count(set.pool)) continue;
        stats.n_blocks += 1;
        stats.mined_sat += ledger.coinbase_sat.at(height);
    }

    auto counts = set.member_tx_counts();
    stats.n_addresses = static_cast<std::int64_t>(counts.size());
    std::set<std::string> cluster_ids;
    for (const auto& [addr, n] : counts) {
        (void)n;
        cluster_ids.insert(clusters.cluster_or_self(addr));
    }
    stats.n_clusters = static_cast<std::int64_t>(cluster_ids.size());
    stats.paid_sat = set.member_total_sat();
    if (stats.mined_sat > 0)
        stats.coverage =
            static_cast<double>(stats.paid_sat) / static_cast<double>(stats.mined_sat);

    if (!counts.empty()) {
        std::vector<std::int64_t> reuse;
        reuse.reserve(counts.size());
        for (const auto& [addr, n] : counts) {
            (void)addr;
            reuse.push_back(n);
        }
        std::sort(reuse.begin(), reuse.end());
        std::size_t mid = reuse.size() / 2;
        stats.median_payouts =
            reuse.size() % 2 == 1
                ? static_cast<double>(reuse[mid])
                : (static_cast<double>(reuse[mid - 1]) + static_cast<double>(reuse[mid])) / 2.0;
        stats.median_over_addresses =
            stats.median_payouts / static_cast<double>(stats.n_addresses);
    }
    return stats;
}

// csv ------------------------------------------------------------------------

inline void write_payouts_csv(const PayoutSet& set, const std::string& path) {
    csv::Writer out(path);
    out.row({"pool", "txid", "height", "vout", "addr", "value", "role"});
    std::size_t member_at = 0;
    for (std::size_t i = 0; i < set.payout_txids.size(); ++i) {
        const auto& txid = set.payout_txids[i];
        std::int64_t height = set.tx_heights.at(txid);
        while (member_at < set.member_outputs.size() &&
               set.member_outputs[member_at].txid == txid) {
            const auto& m = set.member_outputs[member_at++];
            out.row({set.pool, m.txid, csv::format_i64(height), csv::format_i64(m.vout),
                     m.address, csv::format_i64(m.value), "member"});
        }
        const auto& change = set.change_outputs[i];
        if (change.vout >= 0)
            out.row({set.pool, txid, csv::format_i64(height), csv::format_i64(change.vout),
                     "", "0", "change"});
    }
    out.close();
}

inline PayoutSet read_payouts_csv(const std::string& path) {
    csv::Table table = csv::read_file(path);
    if (table.header.size() != 7 || table.header[0] != "pool" || table.header[6] != "role")
        throw Error("UnknownSchema", path + ": not a payouts table");
    PayoutSet set;
    for (const auto& row : table.rows) {
        if (row.size() != 7) throw Error("UnknownSchema", path + ": bad row width");
        if (set.pool.empty()) set.pool = row[0];
        std::int64_t height = 0;
        std::int64_t vout = 0;
        std::int64_t value = 0;
        try {
            height = std::stoll(row[2]);
            vout = std::stoll(row[3]);
            value = std::stoll(row[5]);
        } catch (const std::exception&) {
            throw Error("UnknownSchema", path + ": bad numeric field");
        }
        if (!set.tx_heights.count(row[1])) {
            set.payout_txids.push_back(row[1]);
            set.tx_heights[row[1]] = height;
        }
        if (row[6] == "member")
            set.member_outputs.push_back({row[1], vout, row[4], value, height});
        else if (row[6] == "change")
            set.change_outputs.push_back({row[1], vout});
        else
            throw Error("UnknownSchema", path + ": unknown role " + row[6]);
    }
    return set;
}

// configuration ---------------------------------------------------------------

struct DetectorJob {
    std::string scheme; // collector_chain | fixed_outputs_chain | fanout
    DetectorParams params;
};

inline std::vector<DetectorJob> detector_jobs_from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("pools") || !doc["pools"].is_array())
        throw Error("InvalidConfig", "expected an object with a pools array");
    std::vector<DetectorJob> jobs;
    for (const auto& entry : doc["pools"]) {
        if (!entry.is_object()) throw Error("InvalidConfig", "pool entry must be an object");
        DetectorJob job;
        job.scheme = entry.value("scheme", "");
        job.params.pool = entry.value("pool", "");
        if (job.params.pool.empty())
            throw Error("InvalidConfig", "pool entry needs a pool name");
        if (entry.contains("reward_addresses")) {
            for (const auto& addr : entry["reward_addresses"])
                job.params.reward_addresses.push_back(addr.get<std::string>());
        }
        job.params.collector_address = entry.value("collector_address", "");
        job.params.exact_outputs = entry.value("exact_outputs", job.params.exact_outputs);
        job.params.min_outputs = entry.value("min_outputs", job.params.min_outputs);
        job.params.fanout_amount_sat =
            entry.value("fanout_amount_sat", job.params.fanout_amount_sat);
        job.params.max_chain_length =
            entry.value("max_chain_length", job.params.max_chain_length);
        if (job.scheme != "collector_chain" && job.scheme != "fixed_outputs_chain" &&
            job.scheme != "fanout")
            throw Error("InvalidConfig",
                        "unknown scheme " + job.scheme + " for pool " + job.params.pool);
        jobs.push_back(std::move(job));
    }
    if (jobs.empty()) throw Error("InvalidConfig", "no pools configured");
    return jobs;
}

inline PayoutSet run_detector(const Chain& chain, const DetectorJob& job) {
    if (job.scheme == "collector_chain") return detect_collector_chain(chain, job.params);
    if (job.scheme == "fixed_outputs_chain")
        return detect_fixed_outputs_chain(chain, job.params);
    return detect_fanout(chain, job.params);
}

inline void write_payout_stats_csv(const std::vector<PayoutStats>& rows,
                                   const std::string& path) {
    csv::Writer out(path);
    out.row({"pool", "n_blocks", "n_txs", "n_addresses", "n_clusters", "mined_sat",
             "paid_sat", "coverage", "median_payouts", "median_over_addresses"});
    for (const auto& s : rows)
        out.row({s.pool, csv::format_i64(s.n_blocks), csv::format_i64(s.n_txs),
                 csv::format_i64(s.n_addresses), csv::format_i64(s.n_clusters),
                 csv::format_i64(s.mined_sat), csv::format_i64(s.paid_sat),
                 csv::format_fraction(s.coverage), csv::format_fraction(s.median_payouts),
                 csv::format_fraction(s.median_over_addresses)});
    out.close();
}

} // namespace poolscope
