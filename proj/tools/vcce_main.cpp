#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "vcce/errors.hpp"
#include "vcce/pipeline.hpp"
#include "vcce/synth.hpp"

namespace {

// Global flags override whatever the config file says.
struct GlobalArgs {
  std::string config_path;
  std::string workdir;
  long long seed = -1;
};

vcce::pipe::PipelineConfig effective_config(const GlobalArgs& g) {
  auto cfg = g.config_path.empty() ? vcce::pipe::PipelineConfig::defaults()
                                   : vcce::pipe::PipelineConfig::from_file(g.config_path);
  if (!g.workdir.empty()) cfg.workdir = g.workdir;
  if (g.seed >= 0) {
    cfg.seed = static_cast<uint64_t>(g.seed);
    cfg.train.seed = cfg.seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECG counterfactual explanation pipeline"};
  app.require_subcommand(1);

  GlobalArgs global;
  app.add_option("--config", global.config_path, "pipeline config file")->configurable(false);
  app.add_option("--workdir", global.workdir, "working directory for stage artifacts");
  app.add_option("--seed", global.seed, "run seed");

  // config --dump
  auto* cmd_config = app.add_subcommand("config", "show the effective configuration");
  bool dump = false;
  cmd_config->add_flag("--dump", dump, "print all keys and defaults");

  // synth
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic two-class cohort");
  std::string synth_out = "synthetic";
  vcce::synth::CohortParams synth_params;
  long long synth_seed = 7;
  cmd_synth->add_option("--out", synth_out, "output directory");
  cmd_synth->add_option("--records-per-class", synth_params.records_per_class);
  cmd_synth->add_option("--beats", synth_params.beats_per_record);
  cmd_synth->add_option("--fs", synth_params.fs);
  cmd_synth->add_option("--noise", synth_params.noise_mv, "white noise sigma in mV");
  cmd_synth->add_option("--synth-seed", synth_seed);

  // ingest (flags per the external interface; config supplies the rest)
  auto* cmd_ingest = app.add_subcommand("ingest", "filter the cohort and write cohort.jsonl");
  std::string ingest_records, ingest_manifest, ingest_out;
  cmd_ingest->add_option("--records", ingest_records, "records directory");
  cmd_ingest->add_option("--manifest", ingest_manifest, "metadata CSV");
  cmd_ingest->add_option("--out", ingest_out, "output (work) directory");

  for (const char* name : {"segment", "features", "train", "rank", "curve", "explain", "render", "evaluate"}) {
    app.add_subcommand(name, std::string("run the ") + name + " stage");
  }
  app.add_subcommand("run", "run every stage in order");
  app.add_subcommand("bundle", "collect reports and metrics into workdir/bundle");

  // Global flags remain usable after the subcommand name.
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = effective_config(global);

    if (cmd_config->parsed()) {
      std::fputs(cfg.dump().c_str(), stdout);
      return 0;
    }
    if (cmd_synth->parsed()) {
      synth_params.seed = static_cast<uint64_t>(synth_seed);
      const auto manifest = vcce::synth::write_synth_cohort(synth_out, synth_params);
      std::printf("wrote %s\n", manifest.c_str());
      return 0;
    }
    if (cmd_ingest->parsed()) {
      if (!ingest_records.empty()) cfg.records_dir = ingest_records;
      if (!ingest_manifest.empty()) cfg.manifest = ingest_manifest;
      if (!ingest_out.empty()) cfg.workdir = ingest_out;
      const bool ran = vcce::pipe::run_stage(vcce::pipe::Stage::kIngest, cfg);
      std::printf("%s ingest\n", ran ? "ran" : "skipped");
      return 0;
    }
    if (app.get_subcommand("run")->parsed()) {
      for (const auto stage : vcce::pipe::all_stages()) {
        const bool ran = vcce::pipe::run_stage(stage, cfg);
        std::printf("%s %s\n", ran ? "ran" : "skipped", vcce::pipe::stage_name(stage));
      }
      return 0;
    }
    if (app.get_subcommand("bundle")->parsed()) {
      std::printf("bundle at %s\n", vcce::pipe::make_report_bundle(cfg.workdir).c_str());
      return 0;
    }
    for (const char* name : {"segment", "features", "train", "rank", "curve", "explain", "render", "evaluate"}) {
      if (app.get_subcommand(name)->parsed()) {
        const bool ran = vcce::pipe::run_stage(vcce::pipe::stage_from_name(name), cfg);
        std::printf("%s %s\n", ran ? "ran" : "skipped", name);
        return 0;
      }
    }
    std::fprintf(stderr, "no subcommand\n");
    return 2;
  } catch (const vcce::PreconditionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
}
