// Block attribution: maps each block to the mining pool(s) the evidence
// points at. Evidence kinds, in match order:
//
//   address : a coinbase output pays a known pool payout address
//   marker  : the coinbase field contains a known pool tag as a byte substring
//   external: an external per-height block map names the pool
//
// Marker matches only join the result when no address matched; external maps
// always join. When a block is attributed by marker only and its coinbase pays
// exactly one distinct address, that address is learned as a payout address
// for subsequent blocks. A block naming two or more pools is a conflict.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "poolscope/chain.hpp"
#include "poolscope/csv.hpp"
#include "poolscope/errors.hpp"
#include "poolscope/log.hpp"

namespace poolscope {

struct LearnedEntry {
    std::string entity;
    std::int64_t height = 0; // block that taught us the address
};

struct MappingDb {
    std::map<std::string, std::string> aliases; // raw name -> canonical name
    std::map<std::string, std::set<std::string>> markers; // tag bytes -> entities
    std::map<std::string, std::set<std::string>> payout_addresses;
    std::map<std::int64_t, std::set<std::string>> external_blocks;
    std::map<std::string, LearnedEntry> learned;

    std::string canon(const std::string& raw) const {
        std::string name = raw;
        std::set<std::string> seen;
        while (true) {
            auto it = aliases.find(name);
            if (it == aliases.end()) return name;
            if (!seen.insert(name).second) throw Error("AliasCycle", "at '" + raw + "'");
            name = it->second;
        }
    }
};

inline std::map<std::string, std::string> load_aliases(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("UnknownSchema", path + ": " + e.what());
    }
    if (!doc.is_object()) throw Error("UnknownSchema", path + ": alias map must be an object");
    std::map<std::string, std::string> aliases;
    for (const auto& [raw, canonical] : doc.items()) {
        if (!canonical.is_string())
            throw Error("UnknownSchema", path + ": alias target for '" + raw + "' is not a string");
        aliases[raw] = canonical.get<std::string>();
    }
    // every chain must terminate
    for (const auto& [raw, unused] : aliases) {
        (void)unused;
        std::string name = raw;
        std::set<std::string> seen;
        while (true) {
            auto it = aliases.find(name);
            if (it == aliases.end()) break;
            if (!seen.insert(name).second)
                throw Error("AliasCycle", "at '" + raw + "' in " + path);
            name = it->second;
        }
    }
    return aliases;
}

namespace detail {

inline bool looks_like_block_map(const std::string& path) {
    return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
}

inline void merge_block_map_csv(MappingDb& db, const std::string& path) {
    csv::Table table = csv::read_file(path);
    if (table.header != std::vector<std::string>{"height", "entity"})
        throw Error("UnknownSchema", path + ": expected header height,entity");
    for (const auto& row : table.rows) {
        if (row.size() != 2) throw Error("UnknownSchema", path + ": bad row width");
        std::int64_t height = 0;
        try {
            height = std::stoll(row[0]);
        } catch (const std::exception&) {
            throw Error("UnknownSchema", path + ": bad height '" + row[0] + "'");
        }
        db.external_blocks[height].insert(db.canon(row[1]));
    }
}

inline void merge_pools_json(MappingDb& db, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("IoError", "cannot open " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw Error("UnknownSchema", path + ": " + e.what());
    }
    if (!doc.is_object() || (!doc.contains("coinbase_tags") && !doc.contains("payout_addresses")))
        throw Error("UnknownSchema",
                    path + ": expected an object with coinbase_tags or payout_addresses");

    auto entity_of = [&](const json& val, const std::string& key) {
        if (!val.is_object() || !val.contains("name") || !val["name"].is_string())
            throw Error("UnknownSchema", path + ": entry '" + key + "' has no name");
        return db.canon(val["name"].get<std::string>());
    };
    if (doc.contains("coinbase_tags")) {
        for (const auto& [tag, val] : doc["coinbase_tags"].items())
            db.markers[tag].insert(entity_of(val, tag));
    }
    if (doc.contains("payout_addresses")) {
        for (const auto& [addr, val] : doc["payout_addresses"].items())
            db.payout_addresses[addr].insert(entity_of(val, addr));
    }
}

} // namespace detail

// Adds one mapping file to the database. ".csv" files are per-height block
// maps (header height,entity); everything else must be the pool mapping JSON
// schema with coinbase_tags / payout_addresses sections.
inline void merge_mappings(MappingDb& db, const std::string& path) {
    if (detail::looks_like_block_map(path))
        detail::merge_block_map_csv(db, path);
    else
        detail::merge_pools_json(db, path);
}

inline MappingDb load_mappings(const std::vector<std::string>& paths,
                               const std::string& alias_path = std::string()) {
    MappingDb db;
    if (!alias_path.empty()) db.aliases = load_aliases(alias_path);
    for (const auto& path : paths) merge_mappings(db, path);
    return db;
}

struct MarkerHit {
    std::string pattern;
    std::string entity;
};

// Scans every known tag against the raw coinbase bytes. Returns hits sorted
// by pattern then entity, one entry per (pattern, entity) pair.
inline std::vector<MarkerHit> extract_markers(
    const std::string& coinbase_bytes,
    const std::map<std::string, std::set<std::string>>& markers) {
    std::vector<MarkerHit> hits;
    for (const auto& [pattern, entities] : markers) {
        if (pattern.empty()) continue;
        if (coinbase_bytes.find(pattern) == std::string::npos) continue;
        for (const auto& entity : entities) hits.push_back({pattern, entity});
    }
    return hits;
}

struct BlockAttribution {
    std::int64_t height = 0;
    // entity -> evidence kinds that named it ("address", "marker", "external")
    std::map<std::string, std::set<std::string>> attributions;
    // entity -> tag patterns seen in the coinbase, recorded even when an
    // address match preempted the marker evidence
    std::map<std::string, std::set<std::string>> marker_evidence;
    bool unique = false;
    bool conflict = false;
    std::string learned_address;
    std::string learned_entity;

    std::set<std::string> entities() const {
        std::set<std::string> out;
        for (const auto& [entity, kinds] : attributions) {
            (void)kinds;
            out.insert(entity);
        }
        return out;
    }
    bool unknown() const { return attributions.empty(); }
};

struct AttributeOptions {
    bool learn_addresses = true;
};

// Attributes a single block. Mutates db.learned when a marker-only match
// teaches a new payout address and opts.learn_addresses is set.
inline BlockAttribution attribute_block(const Block& block, MappingDb& db,
                                        const AttributeOptions& opts = {}) {
    BlockAttribution result;
    result.height = block.height;
    const Transaction& coinbase = block.coinbase();

    // step 1: payout address matches (known and learned)
    std::set<std::string> distinct_out_addrs;
    for (const auto& out : coinbase.outputs) {
        if (out.address.empty()) continue;
        distinct_out_addrs.insert(out.address);
        auto known = db.payout_addresses.find(out.address);
        if (known != db.payout_addresses.end())
            for (const auto& entity : known->second)
                result.attributions[entity].insert("address");
        auto learned = db.learned.find(out.address);
        if (learned != db.learned.end() && block.height > learned->second.height)
            result.attributions[learned->second.entity].insert("address");
    }
    bool address_matched = !result.attributions.empty();

    // step 2: coinbase tag markers
    std::set<std::string> marker_entities;
    for (const auto& hit : extract_markers(block.coinbase_bytes, db.markers)) {
        result.marker_evidence[hit.entity].insert(hit.pattern);
        marker_entities.insert(hit.entity);
    }
    if (!address_matched) {
        for (const auto& entity : marker_entities) result.attributions[entity].insert("marker");
        if (opts.learn_addresses && marker_entities.size() == 1 &&
            distinct_out_addrs.size() == 1) {
            const std::string& addr = *distinct_out_addrs.begin();
            if (db.learned.find(addr) == db.learned.end() &&
                db.payout_addresses.find(addr) == db.payout_addresses.end()) {
                db.learned[addr] = {*marker_entities.begin(), block.height};
                result.learned_address = addr;
                result.learned_entity = *marker_entities.begin();
                log::debug("height " + std::to_string(block.height) + " learned " + addr +
                           " -> " + result.learned_entity);
            }
        }
    }

    // step 3: external block maps always join
    auto ext = db.external_blocks.find(block.height);
    if (ext != db.external_blocks.end())
        for (const auto& entity : ext->second) result.attributions[entity].insert("external");

    auto n = result.attributions.size();
    result.unique = n == 1;
    result.conflict = n >= 2;
    return result;
}

struct AttributionLedger {
    HeightRange range{0, 0};
    std::map<std::int64_t, BlockAttribution> by_height;
    std::map<std::int64_t, std::int64_t> coinbase_sat;

    std::vector<std::int64_t> unknown_heights() const {
        std::vector<std::int64_t> out;
        for (const auto& [h, attr] : by_height)
            if (attr.unknown()) out.push_back(h);
        return out;
    }

    std::int64_t attributed_blocks() const {
        std::int64_t n = 0;
        for (const auto& [h, attr] : by_height) {
            (void)h;
            if (!attr.unknown()) ++n;
        }
        return n;
    }

    std::int64_t conflicting_blocks() const {
        std::int64_t n = 0;
        for (const auto& [h, attr] : by_height) {
            (void)h;
            if (attr.conflict) ++n;
        }
        return n;
    }

    std::int64_t learned_count() const {
        std::int64_t n = 0;
        for (const auto& [h, attr] : by_height) {
            (void)h;
            if (!attr.learned_address.empty()) ++n;
        }
        return n;
    }

    // blocks per entity; a conflicting block counts once for every entity named
    std::map<std::string, std::int64_t> entity_block_counts() const {
        std::map<std::string, std::int64_t> counts;
        for (const auto& [h, attr] : by_height) {
            (void)h;
            for (const auto& entity : attr.entities()) ++counts[entity];
        }
        return counts;
    }
};

inline AttributionLedger attribute_chain(const Chain& chain, MappingDb& db,
                                         const AttributeOptions& opts = {}) {
    AttributionLedger ledger;
    ledger.range = {chain.start_height(), chain.end_height()};
    for (const auto& block : chain.blocks) {
        BlockAttribution attr = attribute_block(block, db, opts);
        ledger.coinbase_sat[block.height] = block.coinbase_value();
        ledger.by_height.emplace(block.height, std::move(attr));
    }
    return ledger;
}

// conflict reporting --------------------------------------------------------

struct ConflictPair {
    std::string entity_a; // entity_a < entity_b
    std::string entity_b;
    std::int64_t count = 0;
    std::vector<std::int64_t> example_heights; // up to 3, ascending
};

inline std::vector<ConflictPair> conflict_report(const AttributionLedger& ledger) {
    std::map<std::pair<std::string, std::string>, ConflictPair> pairs;
    for (const auto& [height, attr] : ledger.by_height) {
        if (!attr.conflict) continue;
        auto entity_set = attr.entities();
        std::vector<std::string> entities(entity_set.begin(), entity_set.end());
        for (std::size_t i = 0; i < entities.size(); ++i)
            for (std::size_t j = i + 1; j < entities.size(); ++j) {
                auto key = std::make_pair(entities[i], entities[j]);
                auto& pair = pairs[key];
                if (pair.count == 0) {
                    pair.entity_a = entities[i];
                    pair.entity_b = entities[j];
                }
                ++pair.count;
                if (pair.example_heights.size() < 3) pair.example_heights.push_back(height);
            }
    }
    std::vector<ConflictPair> out;
    for (auto& [key, pair] : pairs) {
        (void)key;
        out.push_back(std::move(pair));
    }
    std::sort(out.begin(), out.end(), [](const ConflictPair& a, const ConflictPair& b) {
        if (a.count != b.count) return a.count > b.count;
        if (a.entity_a != b.entity_a) return a.entity_a < b.entity_a;
        return a.entity_b < b.entity_b;
    });
    return out;
}

// side-by-side tallies for ledgers built from different mapping sources ------

struct SourceComparisonRow {
    std::string label;
    std::int64_t blocks = 0;
    std::int64_t attributed = 0;
    std::int64_t unique = 0;
    std::int64_t conflicting = 0;
    std::int64_t unknown = 0;
    std::int64_t learned = 0;
};

inline std::vector<SourceComparisonRow> source_comparison(
    const std::vector<std::pair<std::string, const AttributionLedger*>>& ledgers) {
    std::vector<SourceComparisonRow> rows;
    for (const auto& [label, ledger] : ledgers) {
        if (!rows.empty()) {
            const auto& first = *ledgers.front().second;
            if (ledger->range.start != first.range.start || ledger->range.end != first.range.end)
                throw Error("MismatchedRanges",
                            label + " covers [" + std::to_string(ledger->range.start) + ", " +
                                std::to_string(ledger->range.end) + ") but " +
                                ledgers.front().first + " covers [" +
                                std::to_string(first.range.start) + ", " +
                                std::to_string(first.range.end) + ")");
        }
        SourceComparisonRow row;
        row.label = label;
        row.blocks = static_cast<std::int64_t>(ledger->by_height.size());
        row.attributed = ledger->attributed_blocks();
        row.conflicting = ledger->conflicting_blocks();
        row.unique = row.attributed - row.conflicting;
        row.unknown = row.blocks - row.attributed;
        row.learned = ledger->learned_count();
        rows.push_back(std::move(row));
    }
    return rows;
}

// csv -----------------------------------------------------------------------

namespace detail {

inline std::string join(const std::vector<std::string>& parts, char sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) return out;
    std::size_t begin = 0;
    while (true) {
        std::size_t pos = s.find(sep, begin);
        if (pos == std::string::npos) {
            out.push_back(s.substr(begin));
            return out;
        }
        out.push_back(s.substr(begin, pos - begin));
        begin = pos + 1;
    }
}

} // namespace detail

inline void write_attributions_csv(const AttributionLedger& ledger, const std::string& path) {
    csv::Writer out(path);
    out.row({"height", "coinbase_sat", "status", "entities", "sources", "learned_address",
             "learned_entity"});
    for (const auto& [height, attr] : ledger.by_height) {
        std::vector<std::string> entities;
        std::vector<std::string> sources;
        for (const auto& [entity, kinds] : attr.attributions) {
            entities.push_back(entity);
            sources.push_back(detail::join({kinds.begin(), kinds.end()}, '+'));
        }
        std::string status = attr.conflict ? "conflict" : (attr.unique ? "unique" : "unknown");
        out.row({csv::format_i64(height), csv::format_i64(ledger.coinbase_sat.at(height)),
                 status, detail::join(entities, '|'), detail::join(sources, '|'),
                 attr.learned_address, attr.learned_entity});
    }
    out.close();
}

inline void write_conflicts_csv(const std::vector<ConflictPair>& report,
                                const std::string& path) {
    csv::Writer out(path);
    out.row({"entity_a", "entity_b", "count", "example_heights"});
    for (const auto& pair : report) {
        std::vector<std::string> heights;
        for (auto h : pair.example_heights) heights.push_back(csv::format_i64(h));
        out.row({pair.entity_a, pair.entity_b, csv::format_i64(pair.count),
                 detail::join(heights, '|')});
    }
    out.close();
}

inline void write_source_comparison_csv(const std::vector<SourceComparisonRow>& rows,
                                        const std::string& path) {
    csv::Writer out(path);
    out.row({"source", "blocks", "attributed", "unique", "conflicting", "unknown", "learned"});
    for (const auto& row : rows)
        out.row({row.label, csv::format_i64(row.blocks), csv::format_i64(row.attributed),
                 csv::format_i64(row.unique), csv::format_i64(row.conflicting),
                 csv::format_i64(row.unknown), csv::format_i64(row.learned)});
    out.close();
}

struct AttributionRow {
    std::int64_t height = 0;
    std::int64_t coinbase_sat = 0;
    std::string status;
    std::vector<std::string> entities;
    std::vector<std::string> sources;
    std::string learned_address;
    std::string learned_entity;
};

inline std::vector<AttributionRow> read_attributions_csv(const std::string& path) {
    csv::Table table = csv::read_file(path);
    if (table.header.size() != 7 || table.header[0] != "height" || table.header[2] != "status")
        throw Error("UnknownSchema", path + ": not an attributions table");
    std::vector<AttributionRow> rows;
    rows.reserve(table.rows.size());
    for (const auto& raw : table.rows) {
        if (raw.size() != 7) throw Error("UnknownSchema", path + ": bad row width");
        AttributionRow row;
        try {
            row.height = std::stoll(raw[0]);
            row.coinbase_sat = std::stoll(raw[1]);
        } catch (const std::exception&) {
            throw Error("UnknownSchema", path + ": bad numeric field");
        }
        row.status = raw[2];
        row.entities = detail::split(raw[3], '|');
        row.sources = detail::split(raw[4], '|');
        row.learned_address = raw[5];
        row.learned_entity = raw[6];
        rows.push_back(std::move(row));
    }
    return rows;
}

// Rebuild a ledger from a previously exported attributions table so later
// pipeline stages can run without redoing attribution. Marker evidence is not
// exported and stays empty.
inline AttributionLedger ledger_from_rows(const std::vector<AttributionRow>& rows) {
    if (rows.empty()) throw Error("EmptyInput", "no attribution rows");
    AttributionLedger ledger;
    ledger.range = {rows.front().height, rows.back().height + 1};
    for (const auto& row : rows) {
        BlockAttribution attr;
        attr.height = row.height;
        if (row.entities.size() != row.sources.size())
            throw Error("UnknownSchema", "entities and sources columns disagree");
        for (std::size_t i = 0; i < row.entities.size(); ++i) {
            if (row.entities[i].empty()) continue;
            for (const auto& kind : detail::split(row.sources[i], '+'))
                attr.attributions[row.entities[i]].insert(kind);
        }
        attr.unique = row.status == "unique";
        attr.conflict = row.status == "conflict";
        attr.learned_address = row.learned_address;
        attr.learned_entity = row.learned_entity;
        ledger.by_height[row.height] = std::move(attr);
        ledger.coinbase_sat[row.height] = row.coinbase_sat;
    }
    if (static_cast<std::int64_t>(rows.size()) != ledger.range.end - ledger.range.start)
        throw Error("NonContiguousHeights",
                    "attribution rows do not cover a contiguous range");
    return ledger;
}

} // namespace poolscope
