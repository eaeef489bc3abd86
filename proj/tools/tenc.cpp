#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tenc/cli/run.hpp"
#include "tenc/runtime.hpp"

int main(int argc, char** argv) {
  tenc::tune_allocator();
  CLI::App app{"Trans-Encoder desk-scale lab: bi-/cross-encoder self-distillation"};
  app.require_subcommand(1);

  struct Flags {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
    std::vector<std::string> overrides;
  } flags;

  const std::vector<std::pair<std::string, std::string>> help{
      {"synth", "write the synthetic dataset as TSV"},
      {"bootstrap", "contrastive bootstrap of the bi-encoder"},
      {"label", "pseudo-label the pair pool with a checkpoint"},
      {"cycle", "bi->cross->bi self-distillation cycles"},
      {"mutual", "mutual distillation of several models"},
      {"eval", "evaluate checkpoints (and their ensemble) on dev/test"},
      {"baseline-selfdistill", "bi-encoder teaches bi-encoder baseline"},
      {"baseline-contrastive-pairs", "contrastive learning on the raw pairs"},
      {"losscheck", "gradient and loss oracle checks"}};
  for (const auto& [name, text] : help) {
    CLI::App* sub = app.add_subcommand(name, text);
    sub->add_option("--config", flags.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--out", flags.out, "output directory")->capture_default_str();
    sub->add_option("--seed", flags.seed, "root seed (overrides the config)");
    sub->add_flag("--deterministic", flags.deterministic, "bitwise-reproducible execution");
    sub->add_option("overrides", flags.overrides, "key=value overrides, applied after the config file");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string mode = app.get_subcommands().front()->get_name();

  try {
    tenc::cli::Assignments a;
    if (!flags.config.empty()) a = tenc::cli::parse_file(flags.config);
    for (const auto& kv : flags.overrides) a.push_back(tenc::cli::parse_override(kv));
    if (flags.seed) a.emplace_back("seed", std::to_string(*flags.seed));
    if (flags.deterministic) a.emplace_back("deterministic", "true");
    const auto cfg = tenc::cli::resolve(a);
    return tenc::cli::run(mode, cfg, flags.out, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
