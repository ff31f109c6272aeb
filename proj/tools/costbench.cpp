// costbench: run experiments, ablations, property suites and tables from the command line.
// Exit codes: 0 success, 1 violations or failed cells, 2 configuration errors.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "costlab/bench.hpp"
#include "costlab/diagnostics.hpp"
#include "costlab/verify_suite.hpp"

namespace {

using namespace costlab;

constexpr int kOk = 0, kFailed = 1, kConfigError = 2;

struct RunOverrides {
    std::string rows, table, format;
    std::size_t threads = 0;
    bool threads_set = false;
};

int execute(ExperimentConfig cfg, const RunOverrides& o) {
    if (!o.rows.empty()) cfg.rows_path = o.rows;
    if (!o.table.empty()) cfg.table_path = o.table;
    if (!o.format.empty()) cfg.table_format = parse_table_format(o.format);
    if (o.threads_set) cfg.threads = o.threads;
    if (cfg.rows_path.empty()) cfg.rows_path = "rows.csv";

    const auto data = resolve_data(cfg);
    const auto rows = run_experiment(cfg, data, &std::cerr);
    {
        std::ofstream out(cfg.rows_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + cfg.rows_path);
        write_rows_csv(out, rows, cfg.record_wall_time);
    }
    std::size_t failed = 0;
    for (const auto& r : rows) failed += !r.ok();
    if (failed == rows.size()) {
        std::cerr << "every cell failed; no table written\n";
        return kFailed;
    }
    const auto table = aggregate(rows);
    if (!cfg.table_path.empty()) emit_table(cfg.table_path, table, cfg.table_format);
    emit_table(std::cout, table, cfg.table_format);
    std::cerr << rows.size() << " rows written to " << cfg.rows_path;
    if (failed) std::cerr << " (" << failed << " flagged)";
    std::cerr << '\n';
    return failed ? kFailed : kOk;
}

CostMatrix matrix_by_name(const std::string& name) {
    for (auto& m : stock_matrices())
        if (m.name == name) return m.cost;
    return load_cost_matrix(name);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cost-sensitive surrogate benchmark"};
    app.require_subcommand(1);

    std::string config_path, preset, rows_path, matrix_path, phi_path, format = "markdown", out_path;
    RunOverrides overrides;
    auto add_run_options = [&](CLI::App* cmd) {
        cmd->add_option("--rows", overrides.rows, "Row CSV path (overrides [output] rows)");
        cmd->add_option("--table", overrides.table, "Table path (overrides [output] table)");
        cmd->add_option("--format", overrides.format, "Table format: csv or markdown");
        cmd->add_option("--threads", overrides.threads, "Worker threads, 0 = all cores")->each([&](const std::string&) {
            overrides.threads_set = true;
        });
    };

    auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
    run->add_option("config", config_path, "Config file")->required();
    add_run_options(run);

    auto* ablate = app.add_subcommand("ablate", "Run a config under an ablation preset (more-samples, larger-model)");
    ablate->add_option("preset", preset, "Preset name")->required();
    ablate->add_option("config", config_path, "Config file")->required();
    add_run_options(ablate);

    bool fast = false;
    auto* verify = app.add_subcommand("verify", "Run the embedding, separation, Bayes-rule and gradient suites");
    verify->add_flag("--fast", fast, "Coarser grids and fewer samples");
    verify->add_option("--matrix", matrix_path, "Also check this cost matrix file")->check(CLI::ExistingFile);
    verify->add_option("--phi", phi_path, "Embedded points for --matrix (one row per report)")->check(CLI::ExistingFile);

    auto* table = app.add_subcommand("table", "Aggregate a row CSV into a result table");
    table->add_option("rows", rows_path, "Row CSV written by run")->required();
    table->add_option("--format", format, "csv or markdown")->check(CLI::IsMember({"csv", "markdown"}));
    table->add_option("-o,--output", out_path, "Write here instead of stdout");

    std::string profile_matrix = "binary_alpha(1/6)", profile_loss = "embedding", svg_path = "profile.svg", csv_path;
    double profile_res = 0.05;
    std::size_t profile_n_u = 2000;
    auto* profile = app.add_subcommand("profile", "Regret scatter (target vs surrogate) for one loss and its default link");
    profile->add_option("--matrix", profile_matrix, "Stock matrix name or cost matrix file");
    profile->add_option("--loss", profile_loss, "Loss kind");
    profile->add_option("--res", profile_res, "Simplex grid resolution");
    profile->add_option("--n-u", profile_n_u, "Sampled predictions");
    profile->add_option("--svg", svg_path, "SVG output");
    profile->add_option("--csv", csv_path, "Optional CSV output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) return execute(load_config(config_path), overrides);
        if (*ablate) return execute(apply_preset(load_config(config_path), preset), overrides);
        if (*verify) {
            VerifyOptions opt;
            opt.fast = fast;
            if (!matrix_path.empty()) opt.extra.push_back({matrix_path, load_cost_matrix(matrix_path)});
            if (!phi_path.empty()) opt.phi = load_matrix(phi_path);
            bool ok = true;
            for (const auto& r : run_verify(opt)) {
                std::cout << (r.ok ? "PASS " : "FAIL ") << r.name << " (" << r.seconds << " s)\n" << r.detail << "\n\n";
                ok &= r.ok;
            }
            return ok ? kOk : kFailed;
        }
        if (*table) {
            std::ifstream in(rows_path);
            if (!in) throw ConfigError("cannot read " + rows_path);
            const auto cells = aggregate(read_rows_csv(in));
            if (out_path.empty()) emit_table(std::cout, cells, parse_table_format(format));
            else emit_table(out_path, cells, parse_table_format(format));
            return kOk;
        }
        if (*profile) {
            const auto cost = matrix_by_name(profile_matrix);
            const auto kind = parse_loss_kind(profile_loss);
            LossSpec spec{kind, cost, kind == LossKind::weighted_hinge ? hinge_alpha_of(cost) : 0.0};
            const ConditionalSurrogate surrogate(spec, cost);
            const Link link = [&](std::span<const double> u) {
                return surrogate.loss().decide(u, surrogate.loss().default_rule());
            };
            const auto prof = regret_profile(surrogate, link, "default", profile_res, profile_n_u, 1);
            std::ofstream svg(svg_path);
            if (!svg) throw std::runtime_error("cannot write " + svg_path);
            prof.write_svg(svg);
            if (!csv_path.empty()) {
                std::ofstream csv(csv_path);
                if (!csv) throw std::runtime_error("cannot write " + csv_path);
                prof.write_csv(csv);
            }
            std::cout << prof.points.size() << " points; delta_hat(0.1) = " << prof.delta_hat(0.1) << '\n';
            return kOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kFailed;
    }
    return kOk;
}
