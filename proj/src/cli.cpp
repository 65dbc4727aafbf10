#include "ape/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <variant>

#include <CLI11.hpp>

#include "ape/alignment.hpp"
#include "ape/checkpoint.hpp"
#include "ape/config.hpp"
#include "ape/corpus.hpp"
#include "ape/decoding.hpp"
#include "ape/errors.hpp"
#include "ape/io.hpp"
#include "ape/metrics.hpp"
#include "ape/training.hpp"
#include "ape/vocab.hpp"

namespace ape {

namespace {

namespace fs = std::filesystem;

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

Vocabulary vocab_of(const CheckpointHeader& h, const std::string& path) {
  if (!h.vocab) throw CheckpointConfigError("checkpoint '" + path + "' carries no vocabulary");
  return *h.vocab;
}

template <typename T>
void run_training(const RunConfig& rc, const Vocabulary& vocab, const std::vector<Triplet>& train_set,
                  const std::vector<Triplet>& dev_set, std::ostream& out) {
  auto model = make_model<T>(rc.model_config(vocab.size()), rc.seed);
  const std::string log_path = join_path(rc.out_dir, "train_log.jsonl");
  const std::string best_path = join_path(rc.out_dir, "best.ckpt");
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw InputError("cannot write '" + log_path + "'");
  const nlohmann::json meta{{"run_config", to_json(rc)}};

  TrainHooks<T> hooks;
  hooks.on_eval = [&](const LogEntry& e) {
    log << to_json_line(e) << '\n';
    log.flush();
    out << "step " << e.step << "  dev_loss " << e.dev_loss << "  dev_acc " << e.dev_token_acc
        << '\n';
  };
  hooks.on_best = [&](const Transformer<T>& m, const LogEntry&) {
    save_checkpoint(best_path, m, &vocab, meta);
  };
  const auto state = train(model, train_set, dev_set, rc.train_config(), hooks);
  save_checkpoint(join_path(rc.out_dir, "final.ckpt"), model, &vocab, meta);
  out << "finished at step " << state.step << " (best dev loss " << state.best_dev_loss
      << " at step " << state.best_step << (state.early_stopped ? ", early stop" : "") << ")\n";
}

int cmd_train(const std::string& config_path, std::ostream& out) {
  const RunConfig rc = load_run_config(config_path);
  if (rc.train_src.empty() || rc.train_mt.empty() || rc.train_pe.empty()) {
    throw ConfigError("config: train_src, train_mt and train_pe are required");
  }
  std::error_code ec;
  fs::create_directories(rc.out_dir, ec);
  if (ec) throw InputError("cannot create '" + rc.out_dir + "': " + ec.message());

  const Vocabulary vocab =
      rc.vocab.empty()
          ? Vocabulary::build_from_files({rc.train_src, rc.train_mt, rc.train_pe}, rc.vocab_max_size)
          : Vocabulary::load(rc.vocab);
  vocab.save(join_path(rc.out_dir, "vocab.txt"));
  write_text(join_path(rc.out_dir, "config.json"), serialize(rc) + "\n");

  const auto train_set =
      load_triplets(CorpusHandle::open(rc.train_src, rc.train_mt, rc.train_pe, vocab));
  const bool has_dev = !rc.dev_src.empty() || !rc.dev_mt.empty() || !rc.dev_pe.empty();
  const auto dev_set =
      has_dev ? load_triplets(CorpusHandle::open(rc.dev_src, rc.dev_mt, rc.dev_pe, vocab))
              : train_set;
  if (train_set.empty()) throw InputError("training corpus has no usable triplet");
  if (dev_set.empty()) throw InputError("development corpus has no usable triplet");

  if (parse_precision(rc.precision) == Precision::f32) {
    run_training<float>(rc, vocab, train_set, dev_set, out);
  } else {
    run_training<double>(rc, vocab, train_set, dev_set, out);
  }
  return kExitOk;
}

struct PosteditArgs {
  std::string model, src, mt, out;
  int beam = kDefaultBeam;
  double alpha = kDefaultAlpha;
  bool greedy = false;
  int max_len = 0;
};

int cmd_postedit(const PosteditArgs& a) {
  CheckpointHeader header;
  auto any = load_any_checkpoint(a.model, &header);
  const Vocabulary vocab = vocab_of(header, a.model);
  const auto src = read_lines(a.src);
  const auto mt = read_lines(a.mt);
  if (src.size() != mt.size()) {
    throw InputError("src has " + std::to_string(src.size()) + " lines, mt has " +
                     std::to_string(mt.size()));
  }
  std::vector<std::string> lines;
  lines.reserve(src.size());
  std::visit(
      [&](const auto& model) {
        for (std::size_t i = 0; i < src.size(); ++i) {
          const TokenSequence x{vocab.encode(split_tokens(src[i])), Role::src};
          const TokenSequence y{vocab.encode(split_tokens(mt[i])), Role::mt};
          if (x.empty() || y.empty()) {
            lines.emplace_back();
            continue;
          }
          const std::size_t limit =
              a.max_len > 0 ? static_cast<std::size_t>(a.max_len) : default_max_len(y.size());
          const auto r = a.greedy ? greedy_decode(model, x, y, limit)
                                  : beam_decode(model, x, y, a.beam, limit, a.alpha);
          std::string line;
          for (const auto& t : vocab.decode(r.ids, true)) line += (line.empty() ? "" : " ") + t;
          lines.push_back(std::move(line));
        }
      },
      any);
  write_lines(a.out, lines);
  return kExitOk;
}

struct AlignArgs {
  std::string model, src, mt, out, format = "csv", layer = "last", head = "mean";
};

int cmd_align(const AlignArgs& a) {
  const auto format = parse_heatmap_format(a.format);
  const auto layers = LayerSpec::parse(a.layer);
  const auto heads = HeadAgg::parse(a.head);
  CheckpointHeader header;
  auto any = load_any_checkpoint(a.model, &header);
  const Vocabulary vocab = vocab_of(header, a.model);
  const auto src = read_lines(a.src);
  const auto mt = read_lines(a.mt);
  if (src.size() != mt.size()) {
    throw InputError("src has " + std::to_string(src.size()) + " lines, mt has " +
                     std::to_string(mt.size()));
  }
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw InputError("cannot create '" + a.out + "': " + ec.message());
  std::visit(
      [&](const auto& model) {
        for (std::size_t i = 0; i < src.size(); ++i) {
          const TokenSequence x{vocab.encode(split_tokens(src[i])), Role::src};
          const TokenSequence y{vocab.encode(split_tokens(mt[i])), Role::mt};
          if (x.empty() || y.empty()) continue;
          const auto map = extract_alignment(model, x, y, layers, heads, &vocab);
          emit_heatmap(map, join_path(a.out, "align_" + std::to_string(i) + "." + extension(format)),
                       format);
        }
      },
      any);
  return kExitOk;
}

struct GenArgs {
  std::string task, out;
  int n = 1000;
  std::uint64_t seed = 1;
  SyntheticOptions options;
};

int cmd_gen(const GenArgs& a) {
  write_corpus(gen_synthetic(parse_task(a.task), a.n, a.options, a.seed), a.out);
  return kExitOk;
}

int dispatch(CLI::App& app, const std::vector<std::string>& args, std::ostream& out) {
  app.require_subcommand(1);

  std::string config_path;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON run configuration");
  train_cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();

  PosteditArgs pe;
  auto* pe_cmd = app.add_subcommand("postedit", "Post-edit mt output with a trained model");
  pe_cmd->add_option("--model", pe.model, "Checkpoint")->required();
  pe_cmd->add_option("--src", pe.src, "Source sentences")->required();
  pe_cmd->add_option("--mt", pe.mt, "Machine translations")->required();
  pe_cmd->add_option("--out", pe.out, "Output file")->required();
  pe_cmd->add_option("--beam", pe.beam, "Beam width")->check(CLI::PositiveNumber);
  pe_cmd->add_option("--alpha", pe.alpha, "Length penalty exponent")->check(CLI::NonNegativeNumber);
  pe_cmd->add_option("--max-len", pe.max_len, "Maximum output length (default 1.5*|mt|+10)");
  pe_cmd->add_flag("--greedy", pe.greedy, "Greedy decoding");

  std::string hyp, ref;
  bool table = false;
  auto* eval_cmd = app.add_subcommand("eval", "Corpus TER and BLEU");
  eval_cmd->add_option("--hyp", hyp, "Hypothesis file")->required();
  eval_cmd->add_option("--ref", ref, "Reference file")->required();
  eval_cmd->add_flag("--table", table, "Also print a human-readable table");

  AlignArgs al;
  auto* align_cmd = app.add_subcommand("align", "Write mt-to-src attention heatmaps");
  align_cmd->add_option("--model", al.model, "Checkpoint")->required();
  align_cmd->add_option("--src", al.src, "Source sentences")->required();
  align_cmd->add_option("--mt", al.mt, "Machine translations")->required();
  align_cmd->add_option("--out", al.out, "Output directory")->required();
  align_cmd->add_option("--format", al.format, "csv, pgm or svg");
  align_cmd->add_option("--layer", al.layer, "last, all-mean or a layer index");
  align_cmd->add_option("--head", al.head, "mean or a head index");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic triplet corpus");
  gen_cmd->add_option("--task", gen.task, "copy, corrupt or disambiguate")->required();
  gen_cmd->add_option("--n", gen.n, "Number of triplets")->required();
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--min-len", gen.options.min_len, "Minimum sentence length");
  gen_cmd->add_option("--max-len", gen.options.max_len, "Maximum sentence length");
  gen_cmd->add_option("--alphabet", gen.options.alphabet, "Symbols per language");
  gen_cmd->add_option("--rate", gen.options.substitution_rate, "Substitution rate (corrupt)");

  std::vector<std::string> inputs;
  std::string vocab_out;
  int max_size = 32000, min_freq = 1;
  auto* vocab_cmd = app.add_subcommand("vocab", "Build a shared vocabulary");
  vocab_cmd->add_option("--in", inputs, "Input files")->required();
  vocab_cmd->add_option("--out", vocab_out, "Vocabulary file")->required();
  vocab_cmd->add_option("--max-size", max_size, "Maximum size including reserved tokens");
  vocab_cmd->add_option("--min-freq", min_freq, "Minimum token frequency");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  app.parse(reversed);

  if (train_cmd->parsed()) return cmd_train(config_path, out);
  if (pe_cmd->parsed()) return cmd_postedit(pe);
  if (eval_cmd->parsed()) {
    const auto report = evaluate_files(hyp, ref);
    out << report_json(report) << '\n';
    if (table) out << report_table(report);
    return kExitOk;
  }
  if (align_cmd->parsed()) return cmd_align(al);
  if (gen_cmd->parsed()) return cmd_gen(gen);
  if (vocab_cmd->parsed()) {
    Vocabulary::build_from_files(inputs, max_size, min_freq).save(vocab_out);
    return kExitOk;
  }
  return kExitUsage;
}

std::string one_line(const std::string& s) {
  std::string out = s;
  std::replace(out.begin(), out.end(), '\n', ' ');
  return out;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Context-aware automatic post-editing"};
  app.name("ape");
  try {
    return dispatch(app, args, out);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitNumeric;
  } catch (const InputError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitData;
  } catch (const CheckpointError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitData;
  } catch (const VocabularyError& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << '\n';
    return kExitUsage;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace ape
