#include <pybind11/iostream.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <variant>

#include "ape/alignment.hpp"
#include "ape/checkpoint.hpp"
#include "ape/cli.hpp"
#include "ape/config.hpp"
#include "ape/corpus.hpp"
#include "ape/decoding.hpp"
#include "ape/errors.hpp"
#include "ape/metrics.hpp"
#include "ape/training.hpp"
#include "ape/vocab.hpp"

namespace py = pybind11;
using namespace ape;

namespace {

using Ids = std::vector<int>;
using Matrix = std::vector<std::vector<double>>;

ModelConfig config_from_kwargs(const py::kwargs& kw) {
  nlohmann::json j = to_json(ModelConfig{});
  j["vocab_size"] = 5;
  for (const auto& item : kw) {
    const auto key = py::cast<std::string>(item.first);
    if (!j.contains(key)) throw ConfigError("unknown model option '" + key + "'");
    if (py::isinstance<py::str>(item.second)) {
      j[key] = py::cast<std::string>(item.second);
    } else if (py::isinstance<py::int_>(item.second)) {
      j[key] = py::cast<long>(item.second);
    } else {
      j[key] = py::cast<double>(item.second);
    }
  }
  return model_config_from_json(j);
}

Triplet triplet_of(const std::tuple<Ids, Ids, Ids>& t) {
  return {{std::get<0>(t), Role::src}, {std::get<1>(t), Role::mt}, {std::get<2>(t), Role::pe}};
}

std::vector<Triplet> triplets_of(const std::vector<std::tuple<Ids, Ids, Ids>>& items) {
  std::vector<Triplet> out;
  for (const auto& t : items) out.push_back(triplet_of(t));
  return out;
}

py::dict decode_dict(const DecodeResult& r) {
  py::dict d;
  d["ids"] = r.ids;
  d["logprob"] = r.logprob;
  d["score"] = r.score;
  d["truncated"] = r.truncated;
  return d;
}

// A model of either width behind one Python type.
class PyModel {
  AnyModel model_;

  template <typename Fn>
  auto visit(Fn&& fn) const {
    return std::visit([&](const auto& m) { return fn(m); }, model_);
  }

 public:
  PyModel(AnyModel m) : model_(std::move(m)) {}

  static PyModel create(std::uint64_t seed, const py::kwargs& kw) {
    const auto c = config_from_kwargs(kw);
    if (c.precision == Precision::f32) return PyModel(make_model<float>(c, seed));
    return PyModel(make_model<double>(c, seed));
  }
  static PyModel load(const std::string& path) { return PyModel(load_any_checkpoint(path)); }

  py::dict config() const {
    return visit([](const auto& m) { return py::module_::import("json").attr("loads")(to_json(m.config()).dump()); });
  }
  std::int64_t num_parameters() const {
    return visit([](const auto& m) {
      std::int64_t n = 0;
      for (const auto& p : m.parameters()) n += static_cast<std::int64_t>(p.size());
      return n;
    });
  }
  Matrix forward(const Ids& src, const Ids& mt, const Ids& pe_in) const {
    return visit([&](const auto& m) {
      NoGradGuard g;
      ForwardContext ctx;
      auto logits = m.forward({src, Role::src}, {mt, Role::mt}, {pe_in, Role::pe}, ctx);
      Matrix out(logits.rows(), std::vector<double>(logits.cols()));
      for (std::size_t r = 0; r < logits.rows(); ++r)
        for (std::size_t c = 0; c < logits.cols(); ++c) out[r][c] = static_cast<double>(logits.at(r, c));
      return out;
    });
  }
  py::dict greedy(const Ids& src, const Ids& mt, std::size_t max_len) const {
    return visit([&](const auto& m) {
      const TokenSequence y{mt, Role::mt};
      return decode_dict(greedy_decode(m, {src, Role::src}, y, max_len ? max_len : default_max_len(y.size())));
    });
  }
  py::dict beam(const Ids& src, const Ids& mt, int width, double alpha, std::size_t max_len) const {
    return visit([&](const auto& m) {
      const TokenSequence y{mt, Role::mt};
      return decode_dict(beam_decode(m, {src, Role::src}, y, width, max_len ? max_len : default_max_len(y.size()), alpha));
    });
  }
  double logprob(const Ids& src, const Ids& mt, const Ids& pe) const {
    return visit([&](const auto& m) { return sequence_logprob(m, {src, Role::src}, {mt, Role::mt}, pe); });
  }
  Matrix alignment(const Ids& src, const Ids& mt, const std::string& layer, const std::string& head) const {
    return visit([&](const auto& m) {
      auto map = extract_alignment(m, {src, Role::src}, {mt, Role::mt}, LayerSpec::parse(layer), HeadAgg::parse(head));
      Matrix out(map.rows, std::vector<double>(map.cols));
      for (std::size_t r = 0; r < map.rows; ++r)
        for (std::size_t c = 0; c < map.cols; ++c) out[r][c] = map.at(r, c);
      return out;
    });
  }
  py::list train(const std::vector<std::tuple<Ids, Ids, Ids>>& train_set,
                 const std::vector<std::tuple<Ids, Ids, Ids>>& dev_set, const py::kwargs& kw) {
    RunConfig rc;
    nlohmann::json j = to_json(rc);
    for (const auto& item : kw) {
      const auto key = py::cast<std::string>(item.first);
      if (py::isinstance<py::int_>(item.second)) {
        j[key] = py::cast<long>(item.second);
      } else {
        j[key] = py::cast<double>(item.second);
      }
    }
    const auto tc = run_config_from_json(j).train_config();
    const auto tr = triplets_of(train_set), dv = triplets_of(dev_set);
    py::list history;
    std::visit(
        [&](auto& m) {
          auto state = ape::train(m, tr, dv, tc);
          for (const auto& e : state.history) history.append(py::module_::import("json").attr("loads")(to_json_line(e)));
        },
        model_);
    return history;
  }
  void save(const std::string& path, const Vocabulary* vocab) const {
    visit([&](const auto& m) {
      save_checkpoint(path, m, vocab);
      return 0;
    });
  }

};

py::dict ter_dict(const Tokens& hyp, const Tokens& ref) {
  const auto t = ter(hyp, ref);
  py::dict d;
  d["insertions"] = t.insertions;
  d["deletions"] = t.deletions;
  d["substitutions"] = t.substitutions;
  d["shifts"] = t.shifts;
  d["ref_len"] = t.ref_len;
  d["score"] = t.score;
  return d;
}

}  // namespace

PYBIND11_MODULE(_ctxape, m) {
  m.doc() = "Context-aware multi-source Transformer for automatic post-editing";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_OSError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<VocabularyError>(m, "VocabularyError", PyExc_IndexError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

  m.attr("PAD") = token::kPad;
  m.attr("UNK") = token::kUnk;
  m.attr("BOS") = token::kBos;
  m.attr("EOS") = token::kEos;

  m.def("levenshtein", &levenshtein, py::arg("hyp"), py::arg("ref"));
  m.def("ter", &ter_dict, py::arg("hyp"), py::arg("ref"));
  m.def(
      "corpus_bleu",
      [](const std::vector<std::pair<Tokens, Tokens>>& pairs, int max_n) {
        std::vector<EvalPair> p;
        for (const auto& [h, r] : pairs) p.push_back({h, r});
        return corpus_bleu(p, max_n);
      },
      py::arg("pairs"), py::arg("max_n") = 4);
  m.def("sentence_bleu", &sentence_bleu, py::arg("hyp"), py::arg("ref"), py::arg("max_n") = 4);
  m.def(
      "evaluate",
      [](const std::vector<std::string>& hyp, const std::vector<std::string>& ref) {
        const auto r = evaluate_corpus(hyp, ref);
        py::dict d;
        d["ter"] = r.ter;
        d["bleu"] = r.bleu;
        d["sentences"] = r.sentences;
        return d;
      },
      py::arg("hyp_lines"), py::arg("ref_lines"));

  m.def(
      "gen_synthetic",
      [](const std::string& task, int n, std::uint64_t seed, int min_len, int max_len, int alphabet, double rate) {
        SyntheticOptions o{min_len, max_len, alphabet, rate};
        const auto c = gen_synthetic(parse_task(task), n, o, seed);
        py::dict d;
        d["src"] = c.src;
        d["mt"] = c.mt;
        d["pe"] = c.pe;
        return d;
      },
      py::arg("task"), py::arg("n"), py::arg("seed") = 1, py::arg("min_len") = 4, py::arg("max_len") = 10,
      py::arg("alphabet") = 20, py::arg("rate") = 0.2);

  m.def(
      "param_count", [](const py::kwargs& kw) { return param_count(config_from_kwargs(kw)); },
      "Closed-form parameter count for the given model options");

  py::class_<Vocabulary>(m, "Vocabulary")
      .def(py::init<>())
      .def_static("build", &Vocabulary::build, py::arg("lines"), py::arg("max_size"), py::arg("min_freq") = 1)
      .def_static("load", &Vocabulary::load)
      .def("save", &Vocabulary::save)
      .def("__len__", &Vocabulary::size)
      .def_property_readonly("tokens", &Vocabulary::tokens)
      .def("encode", [](const Vocabulary& v, const std::string& line) { return v.encode(split_tokens(line)); })
      .def(
          "decode",
          [](const Vocabulary& v, const Ids& ids, bool strip) {
            std::string out;
            for (const auto& t : v.decode(ids, strip)) out += (out.empty() ? "" : " ") + t;
            return out;
          },
          py::arg("ids"), py::arg("strip_special") = true);

  py::class_<PyModel>(m, "Model")
      .def(py::init(&PyModel::create), py::arg("seed") = 1)
      .def_static("load", &PyModel::load)
      .def("save", &PyModel::save, py::arg("path"), py::arg("vocab") = nullptr)
      .def_property_readonly("config", &PyModel::config)
      .def_property_readonly("num_parameters", &PyModel::num_parameters)
      .def("forward", &PyModel::forward, py::arg("src"), py::arg("mt"), py::arg("pe_in"))
      .def("greedy", &PyModel::greedy, py::arg("src"), py::arg("mt"), py::arg("max_len") = 0)
      .def("beam", &PyModel::beam, py::arg("src"), py::arg("mt"), py::arg("beam") = kDefaultBeam,
           py::arg("alpha") = kDefaultAlpha, py::arg("max_len") = 0)
      .def("logprob", &PyModel::logprob, py::arg("src"), py::arg("mt"), py::arg("pe"))
      .def("alignment", &PyModel::alignment, py::arg("src"), py::arg("mt"), py::arg("layer") = "last",
           py::arg("head") = "mean")
      .def("train", &PyModel::train, py::arg("train"), py::arg("dev"));

  m.def(
      "cli", [](const std::vector<std::string>& args) {
        py::scoped_ostream_redirect out;
        return run_cli(args, std::cout, std::cerr);
      },
      py::arg("args"));
}
