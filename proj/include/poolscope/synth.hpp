// Synthetic chain generator. Produces a fully consistent block chain (every
// non-coinbase input spends a previously created output, values conserve)
// plus a ground truth record of everything the analysis side is supposed to
// recover: which pool mined each block, payout transactions and their change
// outputs, wallet address sets, injected CoinJoins and actor tags.
//
// The same seed and config always produce byte-identical output. All draws go
// through one hand-rolled RNG so the stream does not depend on the standard
// library's distribution implementations.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "poolscope/chain.hpp"
#include "poolscope/errors.hpp"
#include "poolscope/toml.hpp"

namespace poolscope {

namespace synth {

// rng ------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : counter_(splitmix64(seed ^ 0x5eedULL)) {}

    std::uint64_t next() { return splitmix64(counter_++); }
    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : next() % n; }
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t counter_;
};

inline std::string counter_txid(std::uint64_t counter) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (int word = 0; word < 4; ++word) {
        std::uint64_t v = splitmix64(counter * 4 + static_cast<std::uint64_t>(word) + 1);
        for (int i = 15; i >= 0; --i) out += digits[(v >> (i * 4)) & 0xf];
    }
    return out;
}

// config ---------------------------------------------------------------------

enum class Scheme { CollectorChain, FixedOutputsChain, Fanout };

inline Scheme scheme_from_string(const std::string& s) {
    if (s == "collector_chain") return Scheme::CollectorChain;
    if (s == "fixed_outputs_chain") return Scheme::FixedOutputsChain;
    if (s == "fanout") return Scheme::Fanout;
    throw Error("InvalidConfig", "unknown scheme '" + s + "'");
}

inline std::string scheme_to_string(Scheme s) {
    switch (s) {
        case Scheme::CollectorChain: return "collector_chain";
        case Scheme::FixedOutputsChain: return "fixed_outputs_chain";
        case Scheme::Fanout: return "fanout";
    }
    return "";
}

struct PoolConfig {
    std::string name;
    double share = 0.0;
    std::string marker;
    Scheme scheme = Scheme::CollectorChain;
    std::int64_t payout_interval = 10;
    std::int64_t outputs_per_payout = 20; // member slots (collector_chain)
    std::int64_t scheme_k = 101;          // total outputs (fixed_outputs_chain)
    std::int64_t fanout_amount_sat = 1000000000;
    std::int64_t fanout_width = 10;
    double payout_ratio = 0.95;

    std::int64_t member_slots() const {
        switch (scheme) {
            case Scheme::CollectorChain: return outputs_per_payout;
            case Scheme::FixedOutputsChain: return scheme_k - 1;
            case Scheme::Fanout: return fanout_width;
        }
        return 0;
    }
};

struct OverlapConfig {
    std::string pool_a;
    std::string pool_b;
    std::int64_t count = 0;
};

struct WalletConfig {
    std::int64_t count = 100;
    std::int64_t max_addresses = 8;
    double reuse_probability = 0.3;
    std::string pool_assignment = "partition";
    std::vector<OverlapConfig> overlaps;
    double tag_fraction = 0.2;
};

struct Config {
    std::uint64_t seed = 1;
    std::int64_t n_blocks = 0;
    std::int64_t start_time = 1500000000;
    std::int64_t mean_interval_s = 600;
    std::int64_t block_reward_sat = 1250000000;
    std::int64_t tx_fee_sat = 10000;
    double coinjoin_rate = 0.0;
    std::vector<PoolConfig> pools;
    WalletConfig wallets;

    void validate() const;
    static Config from_json(const json& doc);
    static Config from_file(const std::string& path);
};

inline void Config::validate() const {
    auto bad = [](const std::string& why) { return Error("InvalidConfig", why); };
    if (n_blocks < 1) throw bad("n_blocks must be at least 1");
    if (mean_interval_s < 1) throw bad("mean_interval_s must be at least 1");
    if (block_reward_sat < 1) throw bad("block_reward_sat must be at least 1");
    if (tx_fee_sat < 0) throw bad("tx_fee_sat must not be negative");
    if (coinjoin_rate < 0) throw bad("coinjoin_rate must not be negative");
    if (pools.empty()) throw bad("at least one pool is required");

    double share_sum = 0.0;
    std::set<std::string> names;
    std::set<std::string> markers;
    for (const auto& pool : pools) {
        if (pool.name.empty()) throw bad("pool name must not be empty");
        if (!names.insert(pool.name).second) throw bad("duplicate pool name " + pool.name);
        if (pool.marker.empty()) throw bad("pool " + pool.name + " has no marker");
        if (!markers.insert(pool.marker).second)
            throw bad("duplicate marker " + pool.marker);
        if (pool.share <= 0) throw bad("pool " + pool.name + " share must be positive");
        share_sum += pool.share;
        if (pool.payout_interval < 1)
            throw bad("pool " + pool.name + " payout_interval must be at least 1");
        if (pool.payout_ratio <= 0 || pool.payout_ratio >= 1)
            throw bad("pool " + pool.name + " payout_ratio must be in (0, 1)");
        switch (pool.scheme) {
            case Scheme::CollectorChain:
                if (pool.outputs_per_payout < 1)
                    throw bad("pool " + pool.name + " outputs_per_payout must be at least 1");
                break;
            case Scheme::FixedOutputsChain: {
                if (pool.scheme_k < 3)
                    throw bad("pool " + pool.name + " scheme_k must be at least 3");
                // keeps the change output strictly larger than any member
                // output for every possible weight draw
                double m = static_cast<double>(pool.scheme_k - 1);
                double ratio_cap = (m + 2.0) / (m + 5.0);
                if (pool.payout_ratio >= ratio_cap)
                    throw bad("pool " + pool.name + " payout_ratio must be below " +
                              std::to_string(ratio_cap) + " for scheme_k " +
                              std::to_string(pool.scheme_k));
                break;
            }
            case Scheme::Fanout:
                if (pool.fanout_width < 1)
                    throw bad("pool " + pool.name + " fanout_width must be at least 1");
                if (pool.fanout_amount_sat < 1)
                    throw bad("pool " + pool.name + " fanout_amount_sat must be at least 1");
                break;
        }
    }
    if (std::abs(share_sum - 1.0) > 1e-6)
        throw bad("pool shares must sum to 1, got " + std::to_string(share_sum));

    if (wallets.count < static_cast<std::int64_t>(pools.size()))
        throw bad("need at least one wallet per pool");
    if (wallets.max_addresses < 1) throw bad("max_addresses must be at least 1");
    if (wallets.reuse_probability < 0 || wallets.reuse_probability > 1)
        throw bad("reuse_probability must be in [0, 1]");
    if (wallets.tag_fraction < 0 || wallets.tag_fraction > 1)
        throw bad("tag_fraction must be in [0, 1]");
    if (wallets.pool_assignment != "partition")
        throw bad("unsupported pool_assignment '" + wallets.pool_assignment + "'");
    std::int64_t overlap_total = 0;
    for (const auto& ov : wallets.overlaps) {
        if (!names.count(ov.pool_a) || !names.count(ov.pool_b))
            throw bad("overlap references unknown pool");
        if (ov.pool_a == ov.pool_b) throw bad("overlap pools must differ");
        if (ov.count < 0) throw bad("overlap count must not be negative");
        overlap_total += ov.count;
    }
    if (overlap_total > wallets.count) throw bad("overlap wallets exceed wallet count");
}

namespace detail {

template <typename T>
inline T get_or(const json& obj, const char* key, T fallback) {
    auto it = obj.find(key);
    if (it == obj.end()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw Error("InvalidConfig", std::string("bad value for '") + key + "'");
    }
}

template <typename T>
inline T get_required(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end()) throw Error("InvalidConfig", std::string("missing '") + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw Error("InvalidConfig", std::string("bad value for '") + key + "'");
    }
}

} // namespace detail

inline Config Config::from_json(const json& doc) {
    if (!doc.is_object()) throw Error("InvalidConfig", "config must be a JSON object");
    Config cfg;
    cfg.seed = detail::get_or<std::uint64_t>(doc, "seed", 1);
    cfg.n_blocks = detail::get_required<std::int64_t>(doc, "n_blocks");
    cfg.start_time = detail::get_or<std::int64_t>(doc, "start_time", cfg.start_time);
    cfg.mean_interval_s = detail::get_or<std::int64_t>(doc, "mean_interval_s", cfg.mean_interval_s);
    cfg.block_reward_sat = detail::get_or<std::int64_t>(doc, "block_reward_sat", cfg.block_reward_sat);
    cfg.tx_fee_sat = detail::get_or<std::int64_t>(doc, "tx_fee_sat", cfg.tx_fee_sat);
    cfg.coinjoin_rate = detail::get_or<double>(doc, "coinjoin_rate", 0.0);

    auto pools_it = doc.find("pools");
    if (pools_it == doc.end() || !pools_it->is_array())
        throw Error("InvalidConfig", "missing 'pools' array");
    for (const auto& jp : *pools_it) {
        PoolConfig pool;
        pool.name = detail::get_required<std::string>(jp, "name");
        pool.share = detail::get_required<double>(jp, "share");
        pool.marker = detail::get_required<std::string>(jp, "marker");
        pool.scheme = scheme_from_string(detail::get_required<std::string>(jp, "scheme"));
        pool.payout_interval = detail::get_or<std::int64_t>(jp, "payout_interval", pool.payout_interval);
        pool.outputs_per_payout =
            detail::get_or<std::int64_t>(jp, "outputs_per_payout", pool.outputs_per_payout);
        pool.scheme_k = detail::get_or<std::int64_t>(jp, "scheme_k", pool.scheme_k);
        pool.fanout_amount_sat =
            detail::get_or<std::int64_t>(jp, "fanout_amount_sat", pool.fanout_amount_sat);
        pool.fanout_width = detail::get_or<std::int64_t>(jp, "fanout_width", pool.fanout_width);
        pool.payout_ratio = detail::get_or<double>(jp, "payout_ratio", pool.payout_ratio);
        cfg.pools.push_back(std::move(pool));
    }

    auto wallets_it = doc.find("wallets");
    if (wallets_it != doc.end()) {
        const json& jw = *wallets_it;
        cfg.wallets.count = detail::get_or<std::int64_t>(jw, "count", cfg.wallets.count);
        cfg.wallets.max_addresses =
            detail::get_or<std::int64_t>(jw, "max_addresses", cfg.wallets.max_addresses);
        cfg.wallets.reuse_probability =
            detail::get_or<double>(jw, "reuse_probability", cfg.wallets.reuse_probability);
        cfg.wallets.pool_assignment =
            detail::get_or<std::string>(jw, "pool_assignment", cfg.wallets.pool_assignment);
        cfg.wallets.tag_fraction = detail::get_or<double>(jw, "tag_fraction", cfg.wallets.tag_fraction);
        auto ov_it = jw.find("overlaps");
        if (ov_it != jw.end()) {
            if (!ov_it->is_array()) throw Error("InvalidConfig", "'overlaps' must be an array");
            for (const auto& jo : *ov_it) {
                OverlapConfig ov;
                ov.pool_a = detail::get_required<std::string>(jo, "pool_a");
                ov.pool_b = detail::get_required<std::string>(jo, "pool_b");
                ov.count = detail::get_required<std::int64_t>(jo, "count");
                cfg.wallets.overlaps.push_back(std::move(ov));
            }
        }
    }
    cfg.validate();
    return cfg;
}

inline Config Config::from_file(const std::string& path) {
    return from_json(toml::load_json_or_toml(path));
}

// ground truth ---------------------------------------------------------------

struct OutputRef {
    std::string txid;
    std::int64_t vout = 0;

    bool operator==(const OutputRef& o) const { return txid == o.txid && vout == o.vout; }
    bool operator<(const OutputRef& o) const {
        return txid != o.txid ? txid < o.txid : vout < o.vout;
    }
};

struct PoolTruth {
    std::string marker;
    std::string reward_address;
    std::string collector_address; // collector_chain only
    Scheme scheme = Scheme::CollectorChain;
    std::int64_t n_blocks = 0;
    std::int64_t mined_sat = 0;
    std::int64_t paid_sat = 0;
    std::vector<std::string> payout_txids;       // emission order
    std::vector<OutputRef> change_outputs;       // one per payout tx, same order
    std::vector<std::string> ambiguous_txids;    // fanout txs with no change output
    std::set<OutputRef> member_outputs;
    std::map<std::string, std::int64_t> member_totals;    // addr -> sat
    std::map<std::string, std::int64_t> member_tx_counts; // addr -> payout txs
};

struct WalletTruth {
    std::int64_t id = 0;
    std::string actor; // empty when untagged
    std::vector<std::string> pools;
    std::vector<std::string> addresses; // mint order
};

struct GroundTruth {
    std::int64_t start_height = 0;
    std::int64_t end_height = 0;
    std::vector<std::string> block_pools; // indexed by height - start_height
    std::map<std::string, PoolTruth> pools;
    std::vector<WalletTruth> wallets;
    std::vector<std::string> coinjoin_txids;
};

inline json truth_to_json(const GroundTruth& truth) {
    json doc;
    doc["range"] = {{"start", truth.start_height}, {"end", truth.end_height}};
    doc["block_pools"] = truth.block_pools;
    json jpools = json::object();
    for (const auto& [name, pt] : truth.pools) {
        json jp;
        jp["marker"] = pt.marker;
        jp["reward_address"] = pt.reward_address;
        jp["collector_address"] = pt.collector_address;
        jp["scheme"] = scheme_to_string(pt.scheme);
        jp["n_blocks"] = pt.n_blocks;
        jp["mined_sat"] = pt.mined_sat;
        jp["paid_sat"] = pt.paid_sat;
        jp["payout_txids"] = pt.payout_txids;
        json changes = json::array();
        for (const auto& ref : pt.change_outputs)
            changes.push_back({{"txid", ref.txid}, {"vout", ref.vout}});
        jp["change_outputs"] = std::move(changes);
        jp["ambiguous_txids"] = pt.ambiguous_txids;
        json members = json::array();
        for (const auto& ref : pt.member_outputs)
            members.push_back({{"txid", ref.txid}, {"vout", ref.vout}});
        jp["member_outputs"] = std::move(members);
        jp["member_totals"] = pt.member_totals;
        jp["member_tx_counts"] = pt.member_tx_counts;
        jpools[name] = std::move(jp);
    }
    doc["pools"] = std::move(jpools);
    json jwallets = json::array();
    for (const auto& w : truth.wallets) {
        json jw;
        jw["id"] = w.id;
        jw["actor"] = w.actor;
        jw["pools"] = w.pools;
        jw["addresses"] = w.addresses;
        jwallets.push_back(std::move(jw));
    }
    doc["wallets"] = std::move(jwallets);
    doc["coinjoin_txids"] = truth.coinjoin_txids;
    return doc;
}

inline GroundTruth truth_from_json(const json& doc) {
    GroundTruth truth;
    truth.start_height = doc.at("range").at("start").get<std::int64_t>();
    truth.end_height = doc.at("range").at("end").get<std::int64_t>();
    truth.block_pools = doc.at("block_pools").get<std::vector<std::string>>();
    for (const auto& [name, jp] : doc.at("pools").items()) {
        PoolTruth pt;
        pt.marker = jp.at("marker").get<std::string>();
        pt.reward_address = jp.at("reward_address").get<std::string>();
        pt.collector_address = jp.at("collector_address").get<std::string>();
        pt.scheme = scheme_from_string(jp.at("scheme").get<std::string>());
        pt.n_blocks = jp.at("n_blocks").get<std::int64_t>();
        pt.mined_sat = jp.at("mined_sat").get<std::int64_t>();
        pt.paid_sat = jp.at("paid_sat").get<std::int64_t>();
        pt.payout_txids = jp.at("payout_txids").get<std::vector<std::string>>();
        for (const auto& jr : jp.at("change_outputs"))
            pt.change_outputs.push_back(
                {jr.at("txid").get<std::string>(), jr.at("vout").get<std::int64_t>()});
        pt.ambiguous_txids = jp.at("ambiguous_txids").get<std::vector<std::string>>();
        for (const auto& jr : jp.at("member_outputs"))
            pt.member_outputs.insert(
                {jr.at("txid").get<std::string>(), jr.at("vout").get<std::int64_t>()});
        pt.member_totals =
            jp.at("member_totals").get<std::map<std::string, std::int64_t>>();
        pt.member_tx_counts =
            jp.at("member_tx_counts").get<std::map<std::string, std::int64_t>>();
        truth.pools.emplace(name, std::move(pt));
    }
    for (const auto& jw : doc.at("wallets")) {
        WalletTruth w;
        w.id = jw.at("id").get<std::int64_t>();
        w.actor = jw.at("actor").get<std::string>();
        w.pools = jw.at("pools").get<std::vector<std::string>>();
        w.addresses = jw.at("addresses").get<std::vector<std::string>>();
        truth.wallets.push_back(std::move(w));
    }
    truth.coinjoin_txids = doc.at("coinjoin_txids").get<std::vector<std::string>>();
    return truth;
}

inline void write_truth(const GroundTruth& truth, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot open " + path + " for writing");
    out << truth_to_json(truth).dump(1) << '\n';
    if (!out) throw Error("IoError", "error writing " + path);
}

inline GroundTruth read_truth(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("MalformedRecord", path + ": " + e.what());
    }
    return truth_from_json(doc);
}

// generator ------------------------------------------------------------------

struct SynthResult {
    std::vector<Block> blocks;
    GroundTruth truth;
};

namespace detail {

struct Utxo {
    std::string txid;
    std::int64_t vout = 0;
    std::int64_t value = 0;
};

struct WalletState {
    std::int64_t id = 0;
    std::set<std::size_t> pool_ids;
    std::vector<std::string> addresses;
    std::map<std::string, std::vector<Utxo>> utxos; // per address
    std::string actor;

    std::int64_t spendable() const {
        std::int64_t s = 0;
        for (const auto& [addr, list] : utxos) {
            (void)addr;
            for (const auto& u : list) s += u.value;
        }
        return s;
    }
};

struct PoolState {
    PoolConfig cfg;
    std::string reward_address;
    std::string collector_address;
    std::vector<Utxo> reward_utxos; // unspent coinbase outputs
    std::vector<Utxo> change_utxo;  // zero or one pending change output
    std::int64_t change_seq = 0;    // fresh change addresses (fixed_outputs_chain)
    std::vector<std::size_t> wallet_ids;
};

// largest-remainder split of `total` into `slots` parts weighted by draws
// from [0.5, 1.5)
inline std::vector<std::int64_t> weighted_split(Rng& rng, std::int64_t total,
                                                std::int64_t slots) {
    std::vector<double> weights;
    double weight_sum = 0.0;
    for (std::int64_t i = 0; i < slots; ++i) {
        weights.push_back(0.5 + rng.unit());
        weight_sum += weights.back();
    }
    std::vector<std::int64_t> amounts;
    std::int64_t assigned = 0;
    for (std::int64_t i = 0; i < slots; ++i) {
        auto a = static_cast<std::int64_t>(static_cast<double>(total) * weights[static_cast<std::size_t>(i)] /
                                           weight_sum);
        amounts.push_back(a);
        assigned += a;
    }
    std::int64_t rest = total - assigned;
    for (std::int64_t i = 0; rest > 0; i = (i + 1) % slots) {
        ++amounts[static_cast<std::size_t>(i)];
        --rest;
    }
    return amounts;
}

// sample `n` distinct indices from `universe`; with replacement if it is
// smaller than n
inline std::vector<std::size_t> sample_wallets(Rng& rng,
                                               const std::vector<std::size_t>& universe,
                                               std::int64_t n) {
    std::vector<std::size_t> out;
    auto need = static_cast<std::size_t>(n);
    if (universe.size() >= need) {
        std::vector<std::size_t> copy = universe;
        for (std::size_t i = 0; i < need; ++i) {
            std::size_t j = i + static_cast<std::size_t>(rng.below(copy.size() - i));
            std::swap(copy[i], copy[j]);
            out.push_back(copy[i]);
        }
    } else {
        for (std::size_t i = 0; i < need; ++i)
            out.push_back(universe[rng.below(universe.size())]);
    }
    return out;
}

} // namespace detail

inline SynthResult generate(const Config& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    std::uint64_t txid_counter = splitmix64(cfg.seed) | 1;

    SynthResult result;
    GroundTruth& truth = result.truth;
    truth.start_height = 0;
    truth.end_height = cfg.n_blocks;

    // pools
    std::vector<detail::PoolState> pools;
    for (const auto& pc : cfg.pools) {
        detail::PoolState ps;
        ps.cfg = pc;
        ps.reward_address = "rw_" + pc.name;
        if (pc.scheme == Scheme::CollectorChain) ps.collector_address = "co_" + pc.name;
        pools.push_back(std::move(ps));

        PoolTruth pt;
        pt.marker = pc.marker;
        pt.reward_address = "rw_" + pc.name;
        pt.collector_address = pc.scheme == Scheme::CollectorChain ? "co_" + pc.name : "";
        pt.scheme = pc.scheme;
        truth.pools.emplace(pc.name, std::move(pt));
    }

    // wallets: single-pool round robin first, then the dedicated overlap sets
    std::vector<detail::WalletState> wallets(static_cast<std::size_t>(cfg.wallets.count));
    std::int64_t overlap_total = 0;
    for (const auto& ov : cfg.wallets.overlaps) overlap_total += ov.count;
    std::int64_t single_count = cfg.wallets.count - overlap_total;
    auto pool_id_of = [&](const std::string& name) {
        for (std::size_t i = 0; i < pools.size(); ++i)
            if (pools[i].cfg.name == name) return i;
        throw Error("InvalidConfig", "unknown pool " + name);
    };
    auto tag_cutoff = static_cast<std::int64_t>(
        cfg.wallets.tag_fraction * static_cast<double>(cfg.wallets.count));
    for (std::int64_t w = 0; w < cfg.wallets.count; ++w) {
        auto& wallet = wallets[static_cast<std::size_t>(w)];
        wallet.id = w;
        if (w < single_count) {
            wallet.pool_ids.insert(static_cast<std::size_t>(w) % pools.size());
        } else {
            std::int64_t off = w - single_count;
            for (const auto& ov : cfg.wallets.overlaps) {
                if (off < ov.count) {
                    wallet.pool_ids.insert(pool_id_of(ov.pool_a));
                    wallet.pool_ids.insert(pool_id_of(ov.pool_b));
                    break;
                }
                off -= ov.count;
            }
        }
        if (w < tag_cutoff) wallet.actor = "actor_" + std::to_string(w);
        for (std::size_t pid : wallet.pool_ids)
            pools[pid].wallet_ids.push_back(static_cast<std::size_t>(w));
    }
    for (const auto& pool : pools)
        if (pool.wallet_ids.empty())
            throw Error("InvalidConfig", "pool " + pool.cfg.name + " ends up with no wallets");

    auto next_txid = [&]() { return counter_txid(txid_counter++); };

    // hand a payout to a wallet and return the receiving address
    auto receive_address = [&](detail::WalletState& wallet) -> std::string {
        bool mint = wallet.addresses.empty() ||
                    (static_cast<std::int64_t>(wallet.addresses.size()) <
                         cfg.wallets.max_addresses &&
                     rng.unit() >= cfg.wallets.reuse_probability);
        if (mint) {
            wallet.addresses.push_back("w" + std::to_string(wallet.id) + "_" +
                                       std::to_string(wallet.addresses.size()));
            return wallet.addresses.back();
        }
        return wallet.addresses[rng.below(wallet.addresses.size())];
    };

    std::uint64_t mix_counter = 0;
    double coinjoin_carry = 0.0;

    for (std::int64_t h = 0; h < cfg.n_blocks; ++h) {
        std::vector<Transaction> txs; // coinbase prepended at the end
        std::int64_t fees = 0;

        // which pool mines this block
        double draw = rng.unit();
        std::size_t miner = pools.size() - 1;
        double acc = 0.0;
        for (std::size_t p = 0; p < pools.size(); ++p) {
            acc += pools[p].cfg.share;
            if (draw < acc) {
                miner = p;
                break;
            }
        }

        // payout transactions due at this height
        for (auto& pool : pools) {
            if (h == 0 || h % pool.cfg.payout_interval != 0) continue;
            PoolTruth& pt = truth.pools.at(pool.cfg.name);

            std::int64_t deposits = 0;
            for (const auto& u : pool.reward_utxos) deposits += u.value;
            std::int64_t change_in = 0;
            for (const auto& u : pool.change_utxo) change_in += u.value;
            std::int64_t total_in = deposits + change_in;

            std::int64_t slots = pool.cfg.member_slots();
            std::int64_t member_sum = 0;
            if (pool.cfg.scheme == Scheme::Fanout) {
                member_sum = pool.cfg.fanout_width * pool.cfg.fanout_amount_sat;
                if (total_in < member_sum) continue; // not enough accrued yet
            } else {
                if (deposits == 0) continue;
                member_sum = static_cast<std::int64_t>(
                    pool.cfg.payout_ratio * static_cast<double>(deposits));
                if (member_sum < slots) continue; // cannot give everyone a satoshi
            }

            Transaction tx;
            tx.txid = next_txid();
            for (const auto& u : pool.change_utxo)
                tx.inputs.push_back({u.txid, u.vout,
                                     pool.cfg.scheme == Scheme::CollectorChain
                                         ? pool.collector_address
                                         : (pool.cfg.scheme == Scheme::Fanout
                                                ? pool.reward_address
                                                : "ch_" + pool.cfg.name + "_" +
                                                      std::to_string(pool.change_seq - 1)),
                                     u.value});
            for (const auto& u : pool.reward_utxos)
                tx.inputs.push_back({u.txid, u.vout, pool.reward_address, u.value});
            pool.change_utxo.clear();
            pool.reward_utxos.clear();

            std::vector<std::int64_t> amounts;
            if (pool.cfg.scheme == Scheme::Fanout)
                amounts.assign(static_cast<std::size_t>(slots), pool.cfg.fanout_amount_sat);
            else
                amounts = detail::weighted_split(rng, member_sum, slots);

            auto chosen = detail::sample_wallets(rng, pool.wallet_ids, slots);
            std::set<std::string> seen_addrs;
            for (std::size_t s = 0; s < chosen.size(); ++s) {
                auto& wallet = wallets[chosen[s]];
                std::string addr = receive_address(wallet);
                auto vout = static_cast<std::int64_t>(tx.outputs.size());
                tx.outputs.push_back({addr, amounts[s]});
                wallet.utxos[addr].push_back({tx.txid, vout, amounts[s]});
                pt.member_outputs.insert({tx.txid, vout});
                pt.member_totals[addr] += amounts[s];
                if (seen_addrs.insert(addr).second) pt.member_tx_counts[addr] += 1;
                pt.paid_sat += amounts[s];
            }

            std::int64_t change_value = total_in - member_sum;
            if (change_value > 0) {
                std::string change_addr;
                switch (pool.cfg.scheme) {
                    case Scheme::CollectorChain: change_addr = pool.collector_address; break;
                    case Scheme::Fanout: change_addr = pool.reward_address; break;
                    case Scheme::FixedOutputsChain:
                        change_addr = "ch_" + pool.cfg.name + "_" +
                                      std::to_string(pool.change_seq++);
                        break;
                }
                auto vout = static_cast<std::int64_t>(tx.outputs.size());
                tx.outputs.push_back({change_addr, change_value});
                pool.change_utxo.push_back({tx.txid, vout, change_value});
                pt.change_outputs.push_back({tx.txid, vout});
            } else {
                pt.change_outputs.push_back({tx.txid, -1});
                if (pool.cfg.scheme == Scheme::Fanout) pt.ambiguous_txids.push_back(tx.txid);
            }
            pt.payout_txids.push_back(tx.txid);
            txs.push_back(std::move(tx));
        }

        // CoinJoin traffic
        double expected = cfg.coinjoin_rate + coinjoin_carry;
        auto n_mixes = static_cast<std::int64_t>(expected);
        coinjoin_carry = expected - static_cast<double>(n_mixes);
        for (std::int64_t mix = 0; mix < n_mixes; ++mix) {
            std::int64_t min_contrib = 10 * cfg.tx_fee_sat + 10;
            std::vector<std::pair<std::size_t, detail::Utxo>> picks;
            std::vector<std::string> pick_addrs;
            std::set<std::size_t> used_wallets;
            // greedy scan from a random offset keeps selection deterministic
            std::size_t offset = static_cast<std::size_t>(rng.below(wallets.size()));
            std::size_t want = 3 + static_cast<std::size_t>(rng.below(3));
            for (std::size_t step = 0; step < wallets.size() && picks.size() < want; ++step) {
                auto& wallet = wallets[(offset + step) % wallets.size()];
                if (used_wallets.count((offset + step) % wallets.size())) continue;
                for (auto& [addr, list] : wallet.utxos) {
                    auto best = list.end();
                    for (auto it = list.begin(); it != list.end(); ++it)
                        if (it->value >= min_contrib &&
                            (best == list.end() || it->value > best->value))
                            best = it;
                    if (best != list.end()) {
                        picks.emplace_back((offset + step) % wallets.size(), *best);
                        pick_addrs.push_back(addr);
                        used_wallets.insert((offset + step) % wallets.size());
                        list.erase(best);
                        break;
                    }
                }
            }
            if (picks.size() < 3) {
                // put the funds back, not enough participants this round
                for (std::size_t i = 0; i < picks.size(); ++i)
                    wallets[picks[i].first].utxos[pick_addrs[i]].push_back(picks[i].second);
                break;
            }

            std::int64_t min_in = picks[0].second.value;
            for (const auto& [wid, u] : picks) {
                (void)wid;
                min_in = std::min(min_in, u.value);
            }
            std::int64_t mixed_value = min_in / 2;

            Transaction tx;
            tx.txid = next_txid();
            for (std::size_t i = 0; i < picks.size(); ++i)
                tx.inputs.push_back({picks[i].second.txid, picks[i].second.vout,
                                     pick_addrs[i], picks[i].second.value});
            // equal-value outputs to fresh one-off addresses
            for (std::size_t i = 0; i < picks.size(); ++i) {
                std::string mix_addr =
                    "mx" + std::to_string(mix_counter) + "_" + std::to_string(i);
                tx.outputs.push_back({mix_addr, mixed_value});
            }
            // change returns to each contributing address; the first
            // participant pays the fee
            for (std::size_t i = 0; i < picks.size(); ++i) {
                std::int64_t change = picks[i].second.value - mixed_value;
                if (i == 0) change -= cfg.tx_fee_sat;
                auto vout = static_cast<std::int64_t>(tx.outputs.size());
                tx.outputs.push_back({pick_addrs[i], change});
                wallets[picks[i].first].utxos[pick_addrs[i]].push_back(
                    {tx.txid, vout, change});
            }
            fees += cfg.tx_fee_sat;
            ++mix_counter;
            truth.coinjoin_txids.push_back(tx.txid);
            txs.push_back(std::move(tx));
        }

        // on the last block every wallet sweeps everything it holds into its
        // first address, tying its addresses together for the clustering side
        if (h == cfg.n_blocks - 1) {
            for (auto& wallet : wallets) {
                std::vector<std::pair<std::string, detail::Utxo>> spendable;
                for (const auto& [addr, list] : wallet.utxos)
                    for (const auto& u : list) spendable.emplace_back(addr, u);
                if (spendable.empty()) continue;
                std::int64_t total = 0;
                for (const auto& [addr, u] : spendable) {
                    (void)addr;
                    total += u.value;
                }
                std::int64_t fee = std::min(cfg.tx_fee_sat, total - 1);
                if (fee < 0) fee = 0;
                Transaction tx;
                tx.txid = next_txid();
                for (const auto& [addr, u] : spendable)
                    tx.inputs.push_back({u.txid, u.vout, addr, u.value});
                tx.outputs.push_back({wallet.addresses.front(), total - fee});
                fees += fee;
                wallet.utxos.clear();
                wallet.utxos[wallet.addresses.front()].push_back(
                    {tx.txid, 0, total - fee});
                txs.push_back(std::move(tx));
            }
        }

        // coinbase
        auto& mining_pool = pools[miner];
        Transaction coinbase;
        coinbase.txid = next_txid();
        coinbase.is_coinbase = true;
        coinbase.inputs.push_back({kZeroTxid, 4294967295LL, std::string(), 0});
        std::int64_t reward = cfg.block_reward_sat + fees;
        coinbase.outputs.push_back({mining_pool.reward_address, reward});
        mining_pool.reward_utxos.push_back({coinbase.txid, 0, reward});

        PoolTruth& miner_truth = truth.pools.at(mining_pool.cfg.name);
        miner_truth.n_blocks += 1;
        miner_truth.mined_sat += reward;
        truth.block_pools.push_back(mining_pool.cfg.name);

        Block block;
        block.height = h;
        block.timestamp = cfg.start_time + h * cfg.mean_interval_s;
        block.coinbase_bytes =
            "blk:" + std::to_string(h) + ":" + mining_pool.cfg.marker;
        block.txs.push_back(std::move(coinbase));
        for (auto& tx : txs) block.txs.push_back(std::move(tx));
        result.blocks.push_back(std::move(block));
    }

    // wallet truth in id order
    for (const auto& wallet : wallets) {
        WalletTruth wt;
        wt.id = wallet.id;
        wt.actor = wallet.actor;
        for (std::size_t pid : wallet.pool_ids) wt.pools.push_back(pools[pid].cfg.name);
        std::sort(wt.pools.begin(), wt.pools.end());
        wt.addresses = wallet.addresses;
        truth.wallets.push_back(std::move(wt));
    }
    return result;
}

// convenience views of the truth for feeding the analysis commands -----------

inline json truth_mappings_json(const GroundTruth& truth) {
    json tags = json::object();
    json addrs = json::object();
    for (const auto& [name, pt] : truth.pools) {
        tags[pt.marker] = {{"name", name}};
        addrs[pt.reward_address] = {{"name", name}};
    }
    return json{{"coinbase_tags", std::move(tags)}, {"payout_addresses", std::move(addrs)}};
}

inline json truth_tags_json(const GroundTruth& truth) {
    json doc = json::object();
    for (const auto& wallet : truth.wallets) {
        if (wallet.actor.empty() || wallet.addresses.empty()) continue;
        doc[wallet.addresses.front()] = {{"name", wallet.actor}, {"type", "M"}};
    }
    return doc;
}

} // namespace synth
} // namespace poolscope
