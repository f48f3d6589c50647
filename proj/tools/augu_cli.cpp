#include <CLI11.hpp>

#include "augu/cli.hpp"

using namespace augu::cli;

int main(int argc, char** argv) {
  CLI::App app{"augu: context-augmented keyword retrieval"};
  app.require_subcommand(1);

  GenWorldArgs gw;
  auto* gen = app.add_subcommand("gen-world", "generate a synthetic world, corpus, vocabulary and pair files");
  gen->add_option("--out", gw.out, "output directory")->required();
  gen->add_option("--seed", gw.seed, "world seed");
  gen->add_option("--set", gw.set, "world config override key=value");
  gen->add_option("--vocab-size", gw.vocab_size, "tokenizer vocabulary size");
  gen->add_flag("--force", gw.force, "overwrite existing files");

  TrainArgs ta;
  std::uint64_t train_seed = 0;
  auto* tr = app.add_subcommand("train", "train a model on a world");
  tr->add_option("--world", ta.world, "gen-world output directory")->required();
  tr->add_option("--out", ta.out, "output directory")->required();
  tr->add_option("--config", ta.config, "training config file (key=value lines)");
  tr->add_option("--set", ta.set, "training config override key=value");
  tr->add_option("--model-set", ta.model_set, "model config override key=value");
  tr->add_option("--profile", ta.profile, "desk or paper");
  tr->add_flag("--no-glancing", ta.no_glancing, "disable context glancing");
  tr->add_option("--contexts", ta.contexts, "context subset used for training pairs");
  auto* seed_opt = tr->add_option("--seed", train_seed, "training seed");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "evaluate checkpoints over context subsets");
  ev->add_option("--world", ea.world, "gen-world output directory")->required();
  ev->add_option("--checkpoint", ea.checkpoints, "model checkpoint (repeatable)")->required();
  ev->add_option("--out", ea.out, "output directory")->required();
  ev->add_option("--contexts", ea.contexts, "context subsets")->delimiter(',');
  ev->add_option("--path", ea.path, "dr, nlg or both");
  ev->add_option("--k", ea.ks, "cutoffs")->delimiter(',');
  ev->add_option("--beam", ea.beam, "beam width for the generative path");
  ev->add_option("--workers", ea.workers, "evaluation threads");

  ServeArgs sa;
  auto* sv = app.add_subcommand("serve", "answer queries from stdin");
  sv->add_option("--world", sa.world, "gen-world output directory")->required();
  sv->add_option("--checkpoint", sa.checkpoint, "model checkpoint")->required();
  sv->add_option("--cache", sa.cache, "cache file, loaded at start and saved at exit");
  sv->add_option("--replay", sa.replay, "context fixture file used instead of simulated providers");
  sv->add_option("--k", sa.k, "results per path");
  sv->add_option("--beam", sa.beam, "beam width for the generative path");

  BenchArgs ba;
  auto* bf = app.add_subcommand("bench-fid", "encoder cost of per-segment vs concatenated encoding");
  bf->add_option("--out", ba.out, "output directory")->required();
  bf->add_option("--checkpoint", ba.checkpoint, "model checkpoint (default: freshly initialized desk model)");
  bf->add_option("--n", ba.ns, "context counts")->delimiter(',');
  bf->add_option("--context-len", ba.context_len, "tokens per context, marker included");
  bf->add_option("--repeats", ba.repeats, "timing repeats per point");
  bf->add_option("--seed", ba.seed, "seed for the model and inputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  return guarded([&] {
    if (*gen) return cmd_gen_world(gw);
    if (*tr) {
      if (*seed_opt) ta.seed = train_seed;
      return cmd_train(ta);
    }
    if (*ev) return cmd_eval(ea);
    if (*sv) return cmd_serve(sa);
    return cmd_bench_fid(ba);
  });
}
