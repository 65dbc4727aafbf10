#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "ape/cli.hpp"
#include "ape/io.hpp"

using namespace ape;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string train_config(const std::string& dir, const std::string& extra) {
  return R"({"train_src": "cli_data/src.txt", "train_mt": "cli_data/mt.txt", "train_pe": "cli_data/pe.txt",
             "d_model": 16, "n_heads": 2, "n_layers": 1, "d_ff": 32, "max_steps": 30, "warmup": 10,
             "eval_interval": 10, "token_budget": 400, "out_dir": ")" +
         dir + "\"" + extra + "}";
}

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == kExitUsage);
  CHECK(cli({"frobnicate"}).code == kExitUsage);
  CHECK(cli({"eval", "--hyp", "x"}).code == kExitUsage);
  CHECK(cli({"gen", "--task", "nope", "--n", "3", "--out", "g"}).code == kExitUsage);
  CHECK(cli({"--help"}).code == kExitOk);
}

TEST_CASE("data errors exit with 2 and a one-line cause") {
  auto r = cli({"eval", "--hyp", "does_not_exist.txt", "--ref", "does_not_exist.txt"});
  CHECK(r.code == kExitData);
  CHECK(r.err.find('\n') == r.err.size() - 1);
  write_lines("cli_a.txt", {"a", "b"});
  write_lines("cli_b.txt", {"a"});
  CHECK(cli({"eval", "--hyp", "cli_a.txt", "--ref", "cli_b.txt"}).code == kExitData);
  write_text("cli_not_ckpt.bin", "hello");
  CHECK(cli({"postedit", "--model", "cli_not_ckpt.bin", "--src", "cli_a.txt", "--mt", "cli_a.txt",
             "--out", "o.txt"}).code == kExitData);
}

TEST_CASE("eval of a file against itself reports BLEU 100") {
  write_lines("cli_same.txt", {"ein Haus", "mein Haus"});
  auto r = cli({"eval", "--hyp", "cli_same.txt", "--ref", "cli_same.txt"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("\"bleu\":100.0") != std::string::npos);
  CHECK(r.out.find("\"sentences\":2") != std::string::npos);
}

TEST_CASE("gen, vocab, train, postedit, eval and align run end to end") {
  REQUIRE(cli({"gen", "--task", "disambiguate", "--n", "40", "--seed", "3", "--out", "cli_data",
               "--max-len", "5"}).code == kExitOk);
  CHECK(read_lines("cli_data/src.txt").size() == 40);
  REQUIRE(cli({"vocab", "--in", "cli_data/src.txt", "cli_data/mt.txt", "cli_data/pe.txt", "--out",
               "cli_vocab.txt", "--max-size", "100"}).code == kExitOk);
  CHECK(read_lines("cli_vocab.txt")[0] == "<pad>");

  write_text("cli_cfg.json", train_config("cli_run", ", \"vocab\": \"cli_vocab.txt\""));
  auto t = cli({"train", "--config", "cli_cfg.json"});
  REQUIRE(t.code == kExitOk);
  CHECK(std::filesystem::exists("cli_run/best.ckpt"));
  CHECK(std::filesystem::exists("cli_run/final.ckpt"));
  CHECK(read_lines("cli_run/train_log.jsonl").size() == 4);

  auto p = cli({"postedit", "--model", "cli_run/final.ckpt", "--src", "cli_data/src.txt", "--mt",
                "cli_data/mt.txt", "--out", "cli_pe.txt", "--beam", "2"});
  REQUIRE(p.code == kExitOk);
  CHECK(read_lines("cli_pe.txt").size() == 40);
  CHECK(cli({"postedit", "--model", "cli_run/final.ckpt", "--src", "cli_data/src.txt", "--mt",
             "cli_data/mt.txt", "--out", "cli_pe_greedy.txt", "--greedy"}).code == kExitOk);
  auto e = cli({"eval", "--hyp", "cli_pe.txt", "--ref", "cli_data/pe.txt", "--table"});
  CHECK(e.code == kExitOk);
  CHECK(e.out.find("\"ter\"") != std::string::npos);

  for (const char* fmt : {"csv", "pgm", "svg"}) {
    auto a = cli({"align", "--model", "cli_run/final.ckpt", "--src", "cli_data/src.txt", "--mt",
                  "cli_data/mt.txt", "--out", "cli_align", "--format", fmt});
    CHECK(a.code == kExitOk);
    CHECK(std::filesystem::exists(std::string("cli_align/align_0.") + fmt));
  }
  CHECK(cli({"align", "--model", "cli_run/final.ckpt", "--src", "cli_data/src.txt", "--mt",
             "cli_data/mt.txt", "--out", "cli_align", "--layer", "7"}).code == kExitUsage);
}

TEST_CASE("bad configurations exit with 1 and numeric blowups with 3") {
  write_text("cli_bad.json", R"({"d_model": 16, "colour": "red"})");
  CHECK(cli({"train", "--config", "cli_bad.json"}).code == kExitUsage);
  REQUIRE(cli({"gen", "--task", "copy", "--n", "20", "--seed", "1", "--out", "cli_data"}).code == kExitOk);
  write_text("cli_nan.json", train_config("cli_nan", ", \"lr_scale\": 1e37, \"max_steps\": 50"));
  auto r = cli({"train", "--config", "cli_nan.json"});
  CHECK(r.code == kExitNumeric);
  // The last good checkpoint survives the abort.
  CHECK(std::filesystem::exists("cli_nan/best.ckpt"));
}
