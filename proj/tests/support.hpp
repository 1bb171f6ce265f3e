// Shared fixture builders and reference implementations for the test suite.
// The reference implementations here are deliberately naive (quadratic where
// the library is clever) so the two can be checked against each other.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "poolscope/chain.hpp"

namespace support {

inline std::string fixture_txid(std::uint64_t n) {
    char buf[65];
    std::snprintf(buf, sizeof(buf), "%064llx", static_cast<unsigned long long>(n));
    return std::string(buf, 64);
}

inline poolscope::Transaction make_coinbase(std::uint64_t txid_n,
                                            std::vector<poolscope::TxOutput> outs) {
    poolscope::Transaction tx;
    tx.txid = fixture_txid(txid_n);
    tx.is_coinbase = true;
    tx.inputs.push_back({poolscope::kZeroTxid, 4294967295LL, std::string(), 0});
    tx.outputs = std::move(outs);
    return tx;
}

inline poolscope::Transaction make_tx(std::uint64_t txid_n,
                                      std::vector<poolscope::TxInput> ins,
                                      std::vector<poolscope::TxOutput> outs) {
    poolscope::Transaction tx;
    tx.txid = fixture_txid(txid_n);
    tx.is_coinbase = false;
    tx.inputs = std::move(ins);
    tx.outputs = std::move(outs);
    return tx;
}

// Spend helper for fixtures that do not care about value conservation.
inline poolscope::TxInput spend(const std::string& address, std::int64_t value,
                                std::uint64_t prev_txid_n = 0, std::int64_t prev_vout = 0) {
    return {fixture_txid(prev_txid_n), prev_vout, address, value};
}

inline poolscope::Block make_block(std::int64_t height, std::string coinbase_bytes,
                                   std::vector<poolscope::Transaction> txs) {
    poolscope::Block b;
    b.height = height;
    b.timestamp = 1500000000 + height * 600;
    b.coinbase_bytes = std::move(coinbase_bytes);
    b.txs = std::move(txs);
    return b;
}

inline poolscope::Chain make_chain(std::vector<poolscope::Block> blocks) {
    poolscope::Chain chain;
    chain.blocks = std::move(blocks);
    chain.index = poolscope::build_index(chain.blocks);
    return chain;
}

inline std::filesystem::path scratch_dir(const std::string& label) {
    auto dir = std::filesystem::temp_directory_path() / ("poolscope_" + label);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void spit(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// Reference connected components: repeatedly merge overlapping groups.
// Quadratic, used to cross-check the union-find clustering.
inline std::set<std::set<std::string>>
components_reference(const std::vector<std::set<std::string>>& groups) {
    std::vector<std::set<std::string>> comps;
    for (const auto& group : groups) {
        if (group.empty()) continue;
        std::set<std::string> merged = group;
        std::vector<std::set<std::string>> rest;
        for (auto& comp : comps) {
            bool overlaps = std::any_of(comp.begin(), comp.end(), [&](const std::string& a) {
                return merged.count(a) > 0;
            });
            if (overlaps)
                merged.insert(comp.begin(), comp.end());
            else
                rest.push_back(std::move(comp));
        }
        rest.push_back(std::move(merged));
        comps = std::move(rest);
    }
    return std::set<std::set<std::string>>(comps.begin(), comps.end());
}

// Replays a chain against a UTXO set: every non-coinbase input must spend an
// existing output with the exact recorded address and value, fees must not be
// negative, and each coinbase must claim the block reward plus the fees of its
// own block. Returns an error description, or nullopt when consistent.
inline std::optional<std::string>
verify_chain_consistency(const std::vector<poolscope::Block>& blocks,
                         std::int64_t block_reward_sat) {
    struct OutInfo {
        std::string addr;
        std::int64_t value;
    };
    std::map<std::pair<std::string, std::int64_t>, OutInfo> utxos;
    for (const auto& block : blocks) {
        std::int64_t fees = 0;
        for (std::size_t t = 1; t < block.txs.size(); ++t) {
            const auto& tx = block.txs[t];
            std::int64_t in_sum = 0;
            for (const auto& in : tx.inputs) {
                auto key = std::make_pair(in.prev_txid, in.prev_vout);
                auto it = utxos.find(key);
                if (it == utxos.end())
                    return "tx " + tx.txid + " spends missing output " + in.prev_txid + ":" +
                           std::to_string(in.prev_vout);
                if (it->second.addr != in.address || it->second.value != in.value)
                    return "tx " + tx.txid + " input does not match the spent output";
                in_sum += in.value;
                utxos.erase(it);
            }
            std::int64_t out_sum = 0;
            for (std::size_t v = 0; v < tx.outputs.size(); ++v) {
                out_sum += tx.outputs[v].value;
                utxos[{tx.txid, static_cast<std::int64_t>(v)}] = {tx.outputs[v].address,
                                                                  tx.outputs[v].value};
            }
            if (out_sum > in_sum)
                return "tx " + tx.txid + " creates value out of nothing";
            fees += in_sum - out_sum;
        }
        const auto& coinbase = block.txs.front();
        if (coinbase.output_total() != block_reward_sat + fees)
            return "block " + std::to_string(block.height) + " coinbase claims " +
                   std::to_string(coinbase.output_total()) + ", expected " +
                   std::to_string(block_reward_sat + fees);
        for (std::size_t v = 0; v < coinbase.outputs.size(); ++v)
            utxos[{coinbase.txid, static_cast<std::int64_t>(v)}] = {
                coinbase.outputs[v].address, coinbase.outputs[v].value};
    }
    return std::nullopt;
}

// Reference Gini coefficient via the mean absolute difference definition,
// G = sum_ij |x_i - x_j| / (2 n^2 mu). Quadratic on purpose.
inline double gini_reference(const std::vector<std::int64_t>& values) {
    const std::size_t n = values.size();
    long double total = 0.0L;
    for (std::int64_t v : values) total += static_cast<long double>(v);
    long double diff_sum = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            diff_sum += std::abs(static_cast<long double>(values[i]) -
                                 static_cast<long double>(values[j]));
    return static_cast<double>(diff_sum / (2.0L * static_cast<long double>(n) * total));
}

} // namespace support
