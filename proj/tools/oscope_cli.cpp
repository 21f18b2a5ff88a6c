// oscope: experiment driver for the object-bias probes.
//
//   oscope run experiment.json [--out DIR]
//   oscope probe --config step.json --out DIR
//   oscope forge -p vocab=comco -p count=200 --seed 3 --out DIR
//   oscope report RUN_DIR... --out DIR
//
// Exit codes: 0 ok, 2 config/schema error, 3 missing input, 4 computation error.

#include <CLI11.hpp>

#include <iostream>

#include "oscope/parallel.hpp"
#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace oscope;
using namespace oscope::cli;

namespace {

/// `-p a.b=value`: value is parsed as JSON when it parses, else taken as a string.
void apply_param(Json& step, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw SchemaError("-p " + kv + ": expected key=value");
    const auto key = kv.substr(0, eq), text = kv.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    Json* node = &step;
    std::size_t start = 0;
    for (auto dot = key.find('.'); dot != std::string::npos; dot = key.find('.', start)) {
        node = &(*node)[key.substr(start, dot - start)];
        start = dot + 1;
    }
    (*node)[key.substr(start)] = std::move(value);
}

int guarded(const std::function<void()>& body) {
    try {
        body();
        return kExitOk;
    } catch (const Error& e) {
        std::cerr << "oscope: " << e.kind() << ": " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "oscope: " << e.what() << "\n";
        return kExitCompute;
    }
}

void print_summary(const Json& manifest, const fs::path& out) {
    std::cout << "wrote " << manifest.at("outputs").size() << " file(s) to " << out.string() << "\n";
    for (const auto& o : manifest.at("outputs")) std::cout << "  " << o.at("path").get<std::string>() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"oscope: object-bias probes for contrastive vision-language embeddings"};
    app.set_version_flag("--version", tool_version());
    app.require_subcommand(1);
    std::size_t threads = 0;
    app.add_option("--threads", threads, "Worker threads (default: OSCOPE_THREADS or all cores)");

    std::string run_config, run_out;
    auto* run = app.add_subcommand("run", "Run every step of an experiment config");
    run->add_option("config", run_config, "Experiment JSON")->required();
    run->add_option("--out", run_out, "Run directory (default: the config's out_dir)");

    struct OneShot {
        std::string config, out;
        std::vector<std::string> params;
        std::optional<std::uint64_t> seed;
        CLI::App* cmd = nullptr;
    };
    std::map<std::string, OneShot> verbs;
    for (const auto& v : step_verbs()) {
        if (v == "report") continue;
        auto& o = verbs[v];
        o.cmd = app.add_subcommand(v, "Run a single '" + v + "' step");
        o.cmd->add_option("--config", o.config, "Step JSON (fields as in an experiment step)");
        o.cmd->add_option("-p,--param", o.params, "Step field override, key=value (dots for nesting)");
        o.cmd->add_option("--seed", o.seed, "Seed for stochastic steps");
        o.cmd->add_option("--out", o.out, "Output directory")->required();
    }

    std::vector<std::string> report_runs;
    std::string report_out, report_title;
    auto* report = app.add_subcommand("report", "Markdown and CSV comparison tables over finished runs");
    report->add_option("runs", report_runs, "Run directories");
    report->add_option("--out", report_out, "Output directory")->required();
    report->add_option("--title", report_title, "Report heading");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitSchema;
    }
    if (threads) set_thread_count(threads);

    if (*run) {
        return guarded([&] {
            const fs::path cfg_path = run_config;
            const auto config = load_config(cfg_path);
            fs::path out = run_out;
            if (out.empty()) {
                if (!config.contains("out_dir") || !config["out_dir"].is_string())
                    throw SchemaError("out_dir: required when --out is not given");
                out = cfg_path.parent_path() / config["out_dir"].get<std::string>();
            }
            print_summary(run_experiment(config, cfg_path.parent_path(), out), out);
        });
    }

    if (*report) {
        return guarded([&] {
            Json step{{"verb", "report"}, {"runs", report_runs}};
            if (!report_title.empty()) step["title"] = report_title;
            Json config{{"name", "report"}, {"steps", Json::array({step})}};
            print_summary(run_experiment(config, fs::current_path(), report_out), report_out);
        });
    }

    for (auto& [verb, o] : verbs) {
        if (!*o.cmd) continue;
        return guarded([&, verb = verb] {
            Json step = o.config.empty() ? Json::object() : load_config(o.config);
            for (const auto& kv : o.params) apply_param(step, kv);
            if (step.contains("verb") && step["verb"] != verb)
                throw SchemaError("verb: config names '" + step["verb"].dump() + "' but '" + verb + "' was invoked");
            step["verb"] = verb;
            Json config{{"name", verb}, {"steps", Json::array({step})}};
            if (o.seed) config["seed"] = *o.seed;
            print_summary(run_experiment(config, fs::current_path(), o.out), o.out);
        });
    }
    return kExitSchema;
}
