// Canonical chain representation: JSONL dump ingestion, validation and the
// address/transaction indexes used by the rest of the toolkit.
//
// Dump format, one block per line:
//   {"height":int,"time":int,"coinbase_hex":"…","txs":[{"txid":"hex64",
//    "coinbase":bool,"ins":[{"prev":"hex64","vout":int,"addr":str|null,
//    "value":int}],"outs":[{"addr":str|null,"value":int}]}]}
//
// All amounts are integer satoshi. A missing (null) address is carried as an
// empty string; such outputs are excluded from clustering and payout
// membership downstream.

#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "poolscope/errors.hpp"

namespace poolscope {

using json = nlohmann::json;

inline constexpr std::int64_t kSatoshiPerBtc = 100000000;
inline const std::string kZeroTxid(64, '0');

struct TxInput {
    std::string prev_txid;
    std::int64_t prev_vout = 0;
    std::string address; // empty = non-standard / unknown script
    std::int64_t value = 0;
};

struct TxOutput {
    std::string address; // empty = non-standard / unknown script
    std::int64_t value = 0;
};

struct Transaction {
    std::string txid;
    bool is_coinbase = false;
    std::vector<TxInput> inputs;
    std::vector<TxOutput> outputs;

    std::int64_t output_total() const {
        std::int64_t s = 0;
        for (const auto& o : outputs) s += o.value;
        return s;
    }
    std::int64_t input_total() const {
        std::int64_t s = 0;
        for (const auto& i : inputs) s += i.value;
        return s;
    }

    bool operator==(const Transaction& other) const {
        if (txid != other.txid || is_coinbase != other.is_coinbase) return false;
        if (inputs.size() != other.inputs.size() || outputs.size() != other.outputs.size())
            return false;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const auto& a = inputs[i];
            const auto& b = other.inputs[i];
            if (a.prev_txid != b.prev_txid || a.prev_vout != b.prev_vout ||
                a.address != b.address || a.value != b.value)
                return false;
        }
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            if (outputs[i].address != other.outputs[i].address ||
                outputs[i].value != other.outputs[i].value)
                return false;
        }
        return true;
    }
};

struct Block {
    std::int64_t height = 0;
    std::int64_t timestamp = 0;
    std::string coinbase_bytes; // raw bytes of the coinbase field
    std::vector<Transaction> txs; // txs[0] is the coinbase transaction

    const Transaction& coinbase() const { return txs.front(); }
    std::int64_t coinbase_value() const { return txs.front().output_total(); }
    std::size_t tx_count() const { return txs.size(); }

    bool operator==(const Block& other) const {
        return height == other.height && timestamp == other.timestamp &&
               coinbase_bytes == other.coinbase_bytes && txs == other.txs;
    }
};

// hex helpers ---------------------------------------------------------------

inline bool is_hex(const std::string& s) {
    for (char c : s) {
        bool ok = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f') || (c >= 'A' && c <= 'F');
        if (!ok) return false;
    }
    return true;
}

inline std::string to_hex(const std::string& bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (unsigned char c : bytes) {
        out += digits[c >> 4];
        out += digits[c & 0xf];
    }
    return out;
}

inline std::optional<std::string> from_hex(const std::string& hex) {
    if (hex.size() % 2 != 0 || !is_hex(hex)) return std::nullopt;
    auto nibble = [](char c) -> unsigned {
        if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
        return static_cast<unsigned>(c - 'A' + 10);
    };
    std::string out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2)
        out += static_cast<char>((nibble(hex[i]) << 4) | nibble(hex[i + 1]));
    return out;
}

// validation ----------------------------------------------------------------

namespace detail {

inline const json& require(const json& obj, const char* key, std::size_t line_no) {
    auto it = obj.find(key);
    if (it == obj.end())
        throw errors::malformed_record(line_no, std::string("missing field '") + key + "'");
    return *it;
}

inline std::int64_t require_int(const json& obj, const char* key, std::size_t line_no) {
    const json& v = require(obj, key, line_no);
    if (!v.is_number_integer())
        throw errors::malformed_record(line_no, std::string("field '") + key + "' is not an integer");
    return v.get<std::int64_t>();
}

inline std::string addr_field(const json& obj, std::size_t line_no) {
    const json& v = require(obj, "addr", line_no);
    if (v.is_null()) return std::string();
    if (!v.is_string())
        throw errors::malformed_record(line_no, "field 'addr' is not a string or null");
    return v.get<std::string>();
}

inline std::string txid_field(const json& v, const char* key, std::size_t line_no) {
    if (!v.is_string())
        throw errors::malformed_record(line_no, std::string("field '") + key + "' is not a string");
    std::string s = v.get<std::string>();
    if (s.size() != 64 || !is_hex(s))
        throw errors::malformed_record(line_no, std::string("field '") + key + "' is not 64 hex chars");
    return s;
}

} // namespace detail

// Parses and validates one dump record. Throws NegativeValue, MissingCoinbase,
// BadCoinbaseInput or MalformedRecord; `line_no` only shapes messages.
inline Block validate_block(const json& record, std::size_t line_no = 0) {
    if (!record.is_object()) throw errors::malformed_record(line_no, "record is not an object");

    Block block;
    block.height = detail::require_int(record, "height", line_no);
    if (block.height < 0) throw errors::malformed_record(line_no, "negative height");
    block.timestamp = detail::require_int(record, "time", line_no);

    const json& cb_hex = detail::require(record, "coinbase_hex", line_no);
    if (!cb_hex.is_string())
        throw errors::malformed_record(line_no, "field 'coinbase_hex' is not a string");
    auto bytes = from_hex(cb_hex.get<std::string>());
    if (!bytes) throw errors::malformed_record(line_no, "field 'coinbase_hex' is not valid hex");
    block.coinbase_bytes = std::move(*bytes);

    const json& txs = detail::require(record, "txs", line_no);
    if (!txs.is_array() || txs.empty())
        throw Error("MissingCoinbase", "block " + std::to_string(block.height) + " has no transactions");

    for (std::size_t t = 0; t < txs.size(); ++t) {
        const json& jtx = txs[t];
        if (!jtx.is_object()) throw errors::malformed_record(line_no, "tx is not an object");
        Transaction tx;
        tx.txid = detail::txid_field(detail::require(jtx, "txid", line_no), "txid", line_no);
        const json& cb = detail::require(jtx, "coinbase", line_no);
        if (!cb.is_boolean())
            throw errors::malformed_record(line_no, "field 'coinbase' is not a boolean");
        tx.is_coinbase = cb.get<bool>();

        const json& ins = detail::require(jtx, "ins", line_no);
        if (!ins.is_array()) throw errors::malformed_record(line_no, "field 'ins' is not an array");
        for (const json& jin : ins) {
            TxInput in;
            in.prev_txid = detail::txid_field(detail::require(jin, "prev", line_no), "prev", line_no);
            in.prev_vout = detail::require_int(jin, "vout", line_no);
            in.address = detail::addr_field(jin, line_no);
            in.value = detail::require_int(jin, "value", line_no);
            if (in.value < 0)
                throw Error("NegativeValue", "tx " + tx.txid + " input value " + std::to_string(in.value));
            tx.inputs.push_back(std::move(in));
        }

        const json& outs = detail::require(jtx, "outs", line_no);
        if (!outs.is_array()) throw errors::malformed_record(line_no, "field 'outs' is not an array");
        for (const json& jout : outs) {
            TxOutput out;
            out.address = detail::addr_field(jout, line_no);
            out.value = detail::require_int(jout, "value", line_no);
            if (out.value < 0)
                throw Error("NegativeValue", "tx " + tx.txid + " output value " + std::to_string(out.value));
            tx.outputs.push_back(std::move(out));
        }

        if (t == 0) {
            if (!tx.is_coinbase)
                throw Error("MissingCoinbase",
                            "block " + std::to_string(block.height) + ": first tx is not a coinbase");
            if (tx.inputs.size() != 1 || tx.inputs[0].prev_txid != kZeroTxid)
                throw Error("BadCoinbaseInput",
                            "block " + std::to_string(block.height) +
                                ": coinbase must have exactly one all-zero input");
        } else if (tx.is_coinbase) {
            throw Error("BadCoinbaseInput",
                        "block " + std::to_string(block.height) + ": coinbase flag on tx " +
                            std::to_string(t));
        }
        block.txs.push_back(std::move(tx));
    }
    return block;
}

// indexes -------------------------------------------------------------------

struct Received {
    std::string txid;
    std::int64_t vout = 0;
    std::int64_t value = 0;
};

struct ChainIndex {
    std::unordered_map<std::string, std::vector<Received>> received_by;
    std::unordered_map<std::string, std::vector<std::string>> spent_by;
    std::unordered_map<std::string, const Transaction*> tx_by_id;
    std::unordered_map<std::string, std::int64_t> block_of_tx;

    const Transaction* find_tx(const std::string& txid) const {
        auto it = tx_by_id.find(txid);
        return it == tx_by_id.end() ? nullptr : it->second;
    }

    std::int64_t height_of(const std::string& txid) const {
        auto it = block_of_tx.find(txid);
        if (it == block_of_tx.end()) throw Error("UnknownTxid", txid);
        return it->second;
    }

    std::int64_t received_total(const std::string& address) const {
        auto it = received_by.find(address);
        if (it == received_by.end()) return 0;
        std::int64_t s = 0;
        for (const auto& r : it->second) s += r.value;
        return s;
    }
};

// Blocks plus their index. The index points into `blocks`; the struct is
// movable but not copyable.
struct Chain {
    std::vector<Block> blocks;
    ChainIndex index;

    Chain() = default;
    Chain(const Chain&) = delete;
    Chain& operator=(const Chain&) = delete;
    Chain(Chain&&) = default;
    Chain& operator=(Chain&&) = default;

    bool empty() const { return blocks.empty(); }
    std::int64_t start_height() const { return blocks.empty() ? 0 : blocks.front().height; }
    // One past the last height, so [start_height, end_height) covers the chain.
    std::int64_t end_height() const { return blocks.empty() ? 0 : blocks.back().height + 1; }
};

inline ChainIndex build_index(const std::vector<Block>& blocks) {
    ChainIndex index;
    std::size_t n_txs = 0;
    for (const auto& b : blocks) n_txs += b.txs.size();
    index.tx_by_id.reserve(n_txs);
    index.block_of_tx.reserve(n_txs);

    for (const auto& block : blocks) {
        for (const auto& tx : block.txs) {
            index.tx_by_id.emplace(tx.txid, &tx);
            index.block_of_tx.emplace(tx.txid, block.height);
            for (std::size_t v = 0; v < tx.outputs.size(); ++v) {
                const auto& out = tx.outputs[v];
                if (out.address.empty()) continue;
                index.received_by[out.address].push_back(
                    {tx.txid, static_cast<std::int64_t>(v), out.value});
            }
            if (tx.is_coinbase) continue;
            for (const auto& in : tx.inputs) {
                if (in.address.empty()) continue;
                auto& spenders = index.spent_by[in.address];
                if (spenders.empty() || spenders.back() != tx.txid) spenders.push_back(tx.txid);
            }
        }
    }
    return index;
}

// loading and writing -------------------------------------------------------

struct HeightRange {
    std::int64_t start = 0;
    std::int64_t end = 0; // exclusive

    bool contains(std::int64_t h) const { return h >= start && h < end; }
};

// Loads a JSONL chain dump. Blocks outside `range` (half-open) are skipped;
// the kept blocks must have strictly increasing, contiguous heights.
inline Chain load_chain(const std::string& path,
                        std::optional<HeightRange> range = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("IoError", "cannot open " + path);

    Chain chain;
    std::unordered_set<std::string> seen_txids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw errors::malformed_record(line_no, e.what());
        }
        Block block = validate_block(record, line_no);
        if (range && !range->contains(block.height)) continue;
        if (!chain.blocks.empty()) {
            std::int64_t expected = chain.blocks.back().height + 1;
            if (block.height != expected)
                throw errors::non_contiguous_heights(expected, block.height);
        }
        for (const auto& tx : block.txs) {
            if (!seen_txids.insert(tx.txid).second) throw errors::duplicate_txid(tx.txid);
        }
        chain.blocks.push_back(std::move(block));
    }
    chain.index = build_index(chain.blocks);
    return chain;
}

inline json block_to_json(const Block& block) {
    json jtxs = json::array();
    for (const auto& tx : block.txs) {
        json jins = json::array();
        for (const auto& in : tx.inputs) {
            json jin;
            jin["prev"] = in.prev_txid;
            jin["vout"] = in.prev_vout;
            if (in.address.empty())
                jin["addr"] = nullptr;
            else
                jin["addr"] = in.address;
            jin["value"] = in.value;
            jins.push_back(std::move(jin));
        }
        json jouts = json::array();
        for (const auto& out : tx.outputs) {
            json jout;
            if (out.address.empty())
                jout["addr"] = nullptr;
            else
                jout["addr"] = out.address;
            jout["value"] = out.value;
            jouts.push_back(std::move(jout));
        }
        json jtx;
        jtx["txid"] = tx.txid;
        jtx["coinbase"] = tx.is_coinbase;
        jtx["ins"] = std::move(jins);
        jtx["outs"] = std::move(jouts);
        jtxs.push_back(std::move(jtx));
    }
    json record;
    record["height"] = block.height;
    record["time"] = block.timestamp;
    record["coinbase_hex"] = to_hex(block.coinbase_bytes);
    record["txs"] = std::move(jtxs);
    return record;
}

inline void write_chain(const std::vector<Block>& blocks, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("IoError", "cannot open " + path + " for writing");
    for (const auto& block : blocks) out << block_to_json(block).dump() << '\n';
    if (!out) throw Error("IoError", "error writing " + path);
}

} // namespace poolscope
