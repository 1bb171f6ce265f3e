// Batch front end wiring the attribution, clustering, payout and analytics
// modules into one binary. Every subcommand reads its inputs, writes report
// files into the output directory and prints one line per report. Exit codes:
// 0 success, 1 usage error, 2 data error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <poolscope/analytics.hpp>
#include <poolscope/attribution.hpp>
#include <poolscope/chain.hpp>
#include <poolscope/clustering.hpp>
#include <poolscope/csv.hpp>
#include <poolscope/errors.hpp>
#include <poolscope/log.hpp>
#include <poolscope/payouts.hpp>
#include <poolscope/synth.hpp>

namespace fs = std::filesystem;
using namespace poolscope;

namespace {

std::optional<HeightRange> parse_range(const std::string& raw) {
    if (raw.empty()) return std::nullopt;
    auto colon = raw.find(':');
    if (colon == std::string::npos)
        throw Error("InvalidConfig", "range must look like start:end, got " + raw);
    try {
        HeightRange range{std::stoll(raw.substr(0, colon)), std::stoll(raw.substr(colon + 1))};
        if (range.start < 0 || range.end <= range.start)
            throw Error("InvalidConfig", "empty or negative range " + raw);
        return range;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        throw Error("InvalidConfig", "range must look like start:end, got " + raw);
    }
}

std::string out_path(const std::string& dir, const std::string& name) {
    fs::create_directories(dir);
    return (fs::path(dir) / name).string();
}

void say(const std::string& path, const std::string& detail) {
    std::cout << "wrote " << path << " (" << detail << ")\n";
}

AttributionLedger make_ledger(const Chain& chain, const std::vector<std::string>& mappings,
                              const std::string& aliases, bool learn) {
    MappingDb db = load_mappings(mappings, aliases);
    AttributeOptions opts;
    opts.learn_addresses = learn;
    return attribute_chain(chain, db, opts);
}

AttributionLedger ledger_from_any(const std::string& attributions_csv, const Chain* chain,
                                  const std::vector<std::string>& mappings,
                                  const std::string& aliases) {
    if (!attributions_csv.empty())
        return ledger_from_rows(read_attributions_csv(attributions_csv));
    if (chain == nullptr || mappings.empty())
        throw Error("InvalidConfig",
                    "needs either --attributions or --chain with --mappings");
    return make_ledger(*chain, mappings, aliases, true);
}

std::vector<PayoutSet> load_payout_sets(const std::vector<std::string>& paths) {
    std::vector<PayoutSet> sets;
    for (const auto& path : paths) sets.push_back(read_payouts_csv(path));
    return sets;
}

std::map<std::string, TagEntry> tags_or_empty(const std::string& path) {
    if (path.empty()) return {};
    return load_tags(path);
}

std::string ratio(std::int64_t num, std::int64_t den) {
    return csv::format_fraction(den == 0 ? 0.0
                                         : static_cast<double>(num) /
                                               static_cast<double>(den));
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mining pool forensics toolkit"};
    app.require_subcommand(1);

    // shared option storage; each subcommand binds the subset it uses
    std::string chain_path;
    std::string range_raw;
    std::vector<std::string> mapping_paths;
    std::string alias_path;
    std::string tag_path;
    std::string params_path;
    std::string attributions_csv;
    std::string clusters_csv;
    std::vector<std::string> payout_csvs;
    std::string out_dir;
    std::string config_path;
    std::int64_t bin_len = 2016;
    double small_threshold = 0.04;
    std::int64_t top_k = 400;
    std::int64_t top_n = 10;
    std::int64_t coinjoin_min = 3;
    bool no_learn = false;
    bool no_coinjoin_filter = false;
    bool compare_sources = false;

    auto* cmd_attribute =
        app.add_subcommand("attribute", "map blocks to pools via markers and addresses");
    cmd_attribute->add_option("--chain", chain_path, "block dump (jsonl)")->required();
    cmd_attribute->add_option("--mappings", mapping_paths, "pool mapping files")
        ->required()
        ->expected(-1);
    cmd_attribute->add_option("--aliases", alias_path, "name unification table");
    cmd_attribute->add_option("--range", range_raw, "height range start:end");
    cmd_attribute->add_flag("--no-learn", no_learn, "disable learned payout addresses");
    cmd_attribute->add_flag("--compare-sources", compare_sources,
                            "also attribute per mapping file and compare");
    cmd_attribute->add_option("-o,--out", out_dir, "output directory")->required();

    auto* cmd_conflicts =
        app.add_subcommand("conflicts", "pairwise conflict report from an attribution table");
    cmd_conflicts->add_option("--attributions", attributions_csv, "attributions.csv")
        ->required();
    cmd_conflicts->add_option("-o,--out", out_dir, "output directory")->required();

    auto* cmd_shares =
        app.add_subcommand("shares", "market share and concentration per difficulty epoch");
    cmd_shares->add_option("--attributions", attributions_csv, "attributions.csv");
    cmd_shares->add_option("--chain", chain_path, "block dump (jsonl)");
    cmd_shares->add_option("--mappings", mapping_paths, "pool mapping files")->expected(-1);
    cmd_shares->add_option("--aliases", alias_path, "name unification table");
    cmd_shares->add_option("--bin-len", bin_len, "blocks per bin");
    cmd_shares->add_option("--small-threshold", small_threshold,
                           "window share below which an entity folds into Other");
    cmd_shares->add_option("-o,--out", out_dir, "output directory")->required();

    auto* cmd_cluster =
        app.add_subcommand("cluster", "multiple-input address clustering");
    cmd_cluster->add_option("--chain", chain_path, "block dump (jsonl)")->required();
    cmd_cluster->add_option("--range", range_raw, "height range start:end");
    cmd_cluster->add_flag("--no-coinjoin-filter", no_coinjoin_filter,
                          "also merge through coinjoin-like transactions");
    cmd_cluster->add_option("--coinjoin-min", coinjoin_min,
                            "equal-output count that marks a coinjoin");
    cmd_cluster->add_option("-o,--out", out_dir, "output directory")->required();

    auto* cmd_payouts =
        app.add_subcommand("payouts", "detect pool payout transactions and members");
    cmd_payouts->add_option("--chain", chain_path, "block dump (jsonl)")->required();
    cmd_payouts->add_option("--params", params_path, "detector parameter file")->required();
    cmd_payouts->add_option("--range", range_raw, "height range start:end");
    cmd_payouts->add_option("--attributions", attributions_csv, "attributions.csv");
    cmd_payouts->add_option("--mappings", mapping_paths, "pool mapping files")->expected(-1);
    cmd_payouts->add_option("--aliases", alias_path, "name unification table");
    cmd_payouts->add_option("--clusters", clusters_csv, "clusters.csv from an earlier run");
    cmd_payouts->add_option("-o,--out", out_dir, "output directory")->required();

    auto* cmd_overlap =
        app.add_subcommand("overlap", "cross-pool member overlap");
    cmd_overlap->add_option("--payouts", payout_csvs, "payout member tables")
        ->required()
        ->expected(-1);
    cmd_overlap->add_option("--clusters", clusters_csv, "clusters.csv")->required();
    cmd_overlap->add_option("-o,--out", out_dir, "output directory")->required();

    auto* cmd_actors =
        app.add_subcommand("actors", "tag-enriched actor table and unknown clusters");
    cmd_actors->add_option("--payouts", payout_csvs, "payout member tables")
        ->required()
        ->expected(-1);
    cmd_actors->add_option("--clusters", clusters_csv, "clusters.csv")->required();
    cmd_actors->add_option("--tags", tag_path, "address tag file (json)");
    cmd_actors->add_option("--chain", chain_path, "block dump (jsonl)")->required();
    cmd_actors->add_option("--top-n", top_n, "unknown clusters to list");
    cmd_actors->add_option("-o,--out", out_dir, "output directory")->required();

    auto* cmd_flow = app.add_subcommand("flow", "pool to actor payout flow graph");
    cmd_flow->add_option("--payouts", payout_csvs, "payout member tables")
        ->required()
        ->expected(-1);
    cmd_flow->add_option("--clusters", clusters_csv, "clusters.csv")->required();
    cmd_flow->add_option("--tags", tag_path, "address tag file (json)");
    cmd_flow->add_option("--top-k", top_k, "clusters per pool to keep");
    cmd_flow->add_option("-o,--out", out_dir, "output directory")->required();

    auto* cmd_simulate =
        app.add_subcommand("simulate", "generate a synthetic chain with ground truth");
    cmd_simulate->add_option("--config", config_path, "economy config (json or toml)")
        ->required();
    cmd_simulate->add_option("-o,--out", out_dir, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << "run with --help for usage\n";
        return 1;
    }

    try {
        auto range = parse_range(range_raw);

        if (app.got_subcommand(cmd_attribute)) {
            Chain chain = load_chain(chain_path, range);
            AttributionLedger ledger =
                make_ledger(chain, mapping_paths, alias_path, !no_learn);

            auto attr_path = out_path(out_dir, "attributions.csv");
            write_attributions_csv(ledger, attr_path);
            say(attr_path, std::to_string(ledger.by_height.size()) + " blocks, " +
                               std::to_string(ledger.attributed_blocks()) + " attributed, " +
                               std::to_string(ledger.learned_count()) + " learned");

            auto conflicts = conflict_report(ledger);
            auto conflict_path = out_path(out_dir, "conflicts.csv");
            write_conflicts_csv(conflicts, conflict_path);
            say(conflict_path,
                std::to_string(ledger.conflicting_blocks()) + " conflicting blocks, ratio " +
                    ratio(ledger.conflicting_blocks(), ledger.attributed_blocks()));

            if (compare_sources) {
                std::vector<MappingDb> dbs;
                std::vector<AttributionLedger> ledgers;
                std::vector<std::pair<std::string, const AttributionLedger*>> labeled;
                for (const auto& path : mapping_paths) {
                    AttributeOptions opts;
                    opts.learn_addresses = !no_learn;
                    MappingDb db = load_mappings({path}, alias_path);
                    dbs.push_back(std::move(db));
                    ledgers.push_back(attribute_chain(chain, dbs.back(), opts));
                }
                for (std::size_t i = 0; i < mapping_paths.size(); ++i)
                    labeled.push_back({fs::path(mapping_paths[i]).filename().string(),
                                       &ledgers[i]});
                labeled.push_back({"combined", &ledger});
                auto cmp_path = out_path(out_dir, "source_comparison.csv");
                write_source_comparison_csv(source_comparison(labeled), cmp_path);
                say(cmp_path, std::to_string(labeled.size()) + " configurations");
            }
        } else if (app.got_subcommand(cmd_conflicts)) {
            auto ledger = ledger_from_rows(read_attributions_csv(attributions_csv));
            auto conflicts = conflict_report(ledger);
            auto path = out_path(out_dir, "conflicts.csv");
            write_conflicts_csv(conflicts, path);
            say(path, std::to_string(conflicts.size()) + " entity pairs, " +
                          std::to_string(ledger.conflicting_blocks()) +
                          " conflicting blocks");
        } else if (app.got_subcommand(cmd_shares)) {
            std::optional<Chain> chain;
            if (attributions_csv.empty()) chain = load_chain(chain_path, range);
            auto ledger = ledger_from_any(attributions_csv, chain ? &*chain : nullptr,
                                          mapping_paths, alias_path);
            auto epochs = epoch_shares(ledger, bin_len, small_threshold);
            auto path = out_path(out_dir, "shares.csv");
            write_shares_csv(epochs, path);
            say(path, std::to_string(epochs.size()) + " epochs of " +
                          std::to_string(bin_len) + " blocks");
        } else if (app.got_subcommand(cmd_cluster)) {
            Chain chain = load_chain(chain_path, range);
            ClusterOptions opts;
            opts.filter_coinjoin = !no_coinjoin_filter;
            opts.coinjoin.min_equal_outputs = coinjoin_min;
            auto result = cluster_chain(chain, opts);

            auto clusters_path = out_path(out_dir, "clusters.csv");
            write_clusters_csv(result.partition, clusters_path);
            say(clusters_path, std::to_string(result.partition.address_count()) +
                                   " addresses in " +
                                   std::to_string(result.partition.cluster_count()) +
                                   " clusters, " +
                                   std::to_string(result.coinjoin_txids.size()) +
                                   " coinjoins filtered");

            auto summary_path = out_path(out_dir, "cluster_summary.csv");
            write_cluster_summary_csv(summarize_clusters(result.partition, chain.index),
                                      summary_path);
            say(summary_path, "received satoshi per cluster");
        } else if (app.got_subcommand(cmd_payouts)) {
            Chain chain = load_chain(chain_path, range);
            auto jobs = detector_jobs_from_json(toml::load_json_or_toml(params_path));

            ClusterAssignment partition;
            if (!clusters_csv.empty()) {
                partition = read_clusters_csv(clusters_csv);
            } else {
                partition = ClusterAssignment(cluster_chain(chain).partition);
            }
            auto ledger =
                ledger_from_any(attributions_csv, &chain, mapping_paths, alias_path);

            std::vector<PayoutStats> stats;
            for (auto& job : jobs) {
                if (range) job.params.window = *range;
                PayoutSet set = run_detector(chain, job);

                auto set_path = out_path(out_dir, "payouts_" + set.pool + ".csv");
                write_payouts_csv(set, set_path);
                say(set_path, std::to_string(set.payout_txids.size()) + " payout txs, " +
                                  std::to_string(set.member_totals().size()) +
                                  " member addresses");

                std::map<std::string, std::int64_t> cluster_sat;
                for (const auto& [addr, sat] : set.member_totals())
                    cluster_sat[partition.cluster_or_self(addr)] += sat;
                if (!cluster_sat.empty()) {
                    auto curve = cumulative_curve(cluster_sat);
                    auto conc_path =
                        out_path(out_dir, "concentration_" + set.pool + ".csv");
                    write_concentration_csv(curve, conc_path);
                    say(conc_path, "k_half " + std::to_string(curve.k_half) + ", gini " +
                                       csv::format_fraction(gini([&] {
                                           std::vector<std::int64_t> v;
                                           for (const auto& [id, sat] : cluster_sat) {
                                               (void)id;
                                               v.push_back(sat);
                                           }
                                           return v;
                                       }())));
                }
                stats.push_back(payout_stats(set, ledger, partition));
            }
            auto stats_path = out_path(out_dir, "payout_stats.csv");
            write_payout_stats_csv(stats, stats_path);
            say(stats_path, std::to_string(stats.size()) + " pools");
        } else if (app.got_subcommand(cmd_overlap)) {
            auto sets = load_payout_sets(payout_csvs);
            auto partition = read_clusters_csv(clusters_csv);
            std::vector<const PayoutSet*> refs;
            for (const auto& set : sets) refs.push_back(&set);
            auto rows = cross_pool_overlap(refs, partition);
            auto path = out_path(out_dir, "overlap.csv");
            write_overlap_csv(rows, path);
            say(path, std::to_string(rows.size()) + " pool pairs");
        } else if (app.got_subcommand(cmd_actors)) {
            Chain chain = load_chain(chain_path, {});
            auto sets = load_payout_sets(payout_csvs);
            auto partition = read_clusters_csv(clusters_csv);
            std::vector<const PayoutSet*> refs;
            for (const auto& set : sets) refs.push_back(&set);
            auto table = enrich_with_tags(partition, refs, tags_or_empty(tag_path));

            auto actors_path = out_path(out_dir, "actors.csv");
            write_actor_table_csv(table, actors_path);
            say(actors_path, std::to_string(table.rows.size()) + " rows");

            auto unknown = top_unknown(table, partition, top_n, chain.index);
            auto unknown_path = out_path(out_dir, "unknown_clusters.csv");
            write_unknown_clusters_csv(unknown, table.pools, unknown_path);
            say(unknown_path, std::to_string(unknown.size()) + " unknown clusters");
        } else if (app.got_subcommand(cmd_flow)) {
            auto sets = load_payout_sets(payout_csvs);
            auto partition = read_clusters_csv(clusters_csv);
            std::vector<const PayoutSet*> refs;
            for (const auto& set : sets) refs.push_back(&set);
            auto table = enrich_with_tags(partition, refs, tags_or_empty(tag_path));
            auto graph = export_flow_graph(table, top_k);

            auto csv_path = out_path(out_dir, "flow.csv");
            write_flow_csv(graph, csv_path);
            say(csv_path, std::to_string(graph.edges.size()) + " edges, " +
                              std::to_string(graph.unknown_clusters_merged) +
                              " unknown clusters merged");
            auto dot_path = out_path(out_dir, "flow.dot");
            write_flow_dot(graph, dot_path);
            say(dot_path, std::to_string(graph.pool_nodes.size()) + " pools, " +
                              std::to_string(graph.actor_nodes.size()) + " actors");
        } else if (app.got_subcommand(cmd_simulate)) {
            auto cfg = synth::Config::from_file(config_path);
            auto sim = synth::generate(cfg);

            auto chain_out = out_path(out_dir, "chain.jsonl");
            write_chain(sim.blocks, chain_out);
            say(chain_out, std::to_string(sim.blocks.size()) + " blocks");

            auto truth_out = out_path(out_dir, "truth.json");
            synth::write_truth(sim.truth, truth_out);
            say(truth_out, std::to_string(sim.truth.pools.size()) + " pools, " +
                               std::to_string(sim.truth.wallets.size()) + " wallets");

            auto mappings_out = out_path(out_dir, "mappings.json");
            {
                std::ofstream out(mappings_out, std::ios::binary);
                out << synth::truth_mappings_json(sim.truth).dump(1) << "\n";
                if (!out) throw Error("IoError", "short write to " + mappings_out);
            }
            say(mappings_out, "markers and reward addresses");

            auto tags_out = out_path(out_dir, "tags.json");
            {
                std::ofstream out(tags_out, std::ios::binary);
                out << synth::truth_tags_json(sim.truth).dump(1) << "\n";
                if (!out) throw Error("IoError", "short write to " + tags_out);
            }
            say(tags_out, "tagged wallet addresses");
        }
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "InternalError: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
