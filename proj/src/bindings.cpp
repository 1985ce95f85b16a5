// SPDX-License-Identifier: Apache-2.0
//
// Python module hanja_mt._core.
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hmt/checkpoint.hpp"
#include "hmt/error.hpp"
#include "hmt/evaluation.hpp"
#include "hmt/experiments.hpp"
#include "hmt/inference.hpp"
#include "hmt/run_config.hpp"
#include "hmt/service.hpp"
#include "hmt/synth.hpp"
#include "hmt/topics.hpp"

namespace py = pybind11;
using namespace hmt;

namespace {

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json py_to_json(const py::handle& obj) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

py::dict report_dict(const EvalReport& r) { return json_to_py(to_json(r)); }

py::dict record_dict(const CorpusRecord& r) {
  return json_to_py(nlohmann::json::parse(format_corpus_line(r)));
}

std::vector<CorpusRecord> records_from(const py::iterable& items) {
  std::vector<CorpusRecord> out;
  for (auto item : items) out.push_back(parse_corpus_line(py_to_json(item).dump()));
  return out;
}

Side side_from(const std::string& name) {
  if (name == "hanja") return Side::kHanja;
  if (name == "korean") return Side::kKorean;
  throw ValueError("side must be 'hanja' or 'korean'");
}

/// A checkpoint with both tokenizers, as used by the service.
class Translator {
 public:
  explicit Translator(const std::filesystem::path& checkpoint) : snap_(ModelSnapshot::load(checkpoint)) {}

  std::string id() const { return snap_->id; }

  py::dict translate(const std::string& text, std::size_t beam_size, std::size_t max_len, double alpha) const {
    DecodeOptions d;
    d.beam_size = beam_size;
    d.max_len = max_len;
    d.alpha = alpha;
    d.validate();
    TranslationRecord r;
    {
      py::gil_scoped_release release;
      r = translate_text(snap_->model, snap_->hanja, snap_->korean, "", text, d);
    }
    return json_to_py(to_json(r));
  }

  py::list restore(const std::string& text, std::size_t k) const {
    const auto ids = encode_damaged(parse_damaged_text(text), snap_->hanja);
    std::vector<PositionCandidates> found;
    {
      py::gil_scoped_release release;
      found = restore_topk(snap_->model, ids, k);
    }
    py::list out;
    for (const auto& pc : found) {
      py::list cands;
      for (const auto& c : pc.candidates) {
        py::dict d;
        d["token"] = snap_->hanja.vocab().token(c.token);
        d["id"] = c.token;
        d["logprob"] = c.logprob;
        d["rank"] = c.rank;
        cands.append(d);
      }
      py::dict p;
      p["position"] = pc.position;
      p["candidates"] = cands;
      out.append(p);
    }
    return out;
  }

 private:
  std::shared_ptr<const ModelSnapshot> snap_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hanja restoration and translation core";

  // Translators run most recent first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ValueError>(m, "HmtValueError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NotFoundError>(m, "NotFoundError", PyExc_FileNotFoundError);
  py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
  py::register_exception<ConflictError>(m, "ConflictError", PyExc_RuntimeError);

  // Metrics.
  m.def(
      "bleu",
      [](const std::vector<Segment>& hyps, const std::vector<Segment>& refs, std::size_t max_n, bool smooth) {
        return report_dict(bleu(hyps, refs, max_n, smooth ? BleuSmoothing::kAddOne : BleuSmoothing::kNone));
      },
      py::arg("hypotheses"), py::arg("references"), py::arg("max_n") = 4, py::arg("smooth") = false);
  m.def(
      "rouge_l",
      [](const std::vector<Segment>& hyps, const std::vector<Segment>& refs, double beta) {
        return report_dict(rouge_l(hyps, refs, beta));
      },
      py::arg("hypotheses"), py::arg("references"), py::arg("beta") = 1.2);
  m.def(
      "chrf",
      [](const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
        return report_dict(chrf(hyps, refs));
      },
      py::arg("hypotheses"), py::arg("references"));
  m.def(
      "hits_at_k",
      [](const std::vector<std::vector<TokenId>>& candidates, const std::vector<TokenId>& truths,
         const std::vector<std::size_t>& ks) {
        py::list out;
        for (const auto& r : hits_at_k(candidates, truths, ks)) out.append(report_dict(r));
        return out;
      },
      py::arg("candidates"), py::arg("truths"), py::arg("ks") = std::vector<std::size_t>{1, 5, 10});
  m.def("lcs_length", &lcs_length, py::arg("a"), py::arg("b"));

  // Tokenization.
  py::class_<Vocab>(m, "Vocab")
      .def_static("load", &Vocab::load, py::arg("path"))
      .def("__len__", &Vocab::size)
      .def("id", &Vocab::id, py::arg("token"))
      .def("token", &Vocab::token, py::arg("id"))
      .def("hash", &Vocab::hash)
      .def_property_readonly("side", [](const Vocab& v) { return std::string(side_name(v.side())); });

  py::class_<Tokenizer>(m, "Tokenizer")
      .def(py::init<Vocab>(), py::arg("vocab"))
      .def("pieces", &Tokenizer::pieces, py::arg("text"))
      .def("encode", &Tokenizer::encode, py::arg("text"), py::arg("frame") = false)
      .def(
          "decode", [](const Tokenizer& t, const std::vector<TokenId>& ids) { return t.decode(ids); }, py::arg("ids"))
      .def_property_readonly("vocab", &Tokenizer::vocab);

  m.def(
      "mask_ngram",
      [](const std::vector<TokenId>& ids, double mask_rate, std::uint64_t seed) {
        MaskingOptions o;
        o.mask_rate = mask_rate;
        Rng rng(seed);
        const MaskedSentence s = mask_ngram(ids, o, rng);
        return py::make_tuple(s.inputs, s.targets);
      },
      py::arg("ids"), py::arg("mask_rate") = 0.15, py::arg("seed") = 0,
      "Returns (inputs, targets); unmasked targets are -1.");

  // Corpora.
  m.def(
      "bundled_corpus", [](std::uint64_t seed) {
        py::list out;
        for (const auto& r : bundled_corpus(seed)) out.append(record_dict(r));
        return out;
      },
      py::arg("seed") = 2023);
  m.def(
      "prepare_corpus",
      [](const py::iterable& records, const py::dict& config, std::uint64_t seed, const std::string& out_dir) {
        const CorpusConfig c = corpus_config_from_json(py_to_json(config));
        const PreparedCorpus p = prepare_corpus(records_from(records), c, seed);
        if (!out_dir.empty()) save_prepared(p, out_dir);
        return json_to_py(prepared_summary(p));
      },
      py::arg("records"), py::arg("config") = py::dict(), py::arg("seed") = 0, py::arg("out_dir") = "");

  // Models.
  m.def(
      "parameter_count",
      [](const py::dict& config) { return parameter_count(model_config_from_json(py_to_json(config))); },
      py::arg("model_config"));
  m.def("reference_model_config", [] { return json_to_py(to_json(ModelConfig::reference_scale())); });

  py::class_<Translator>(m, "Translator")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def_property_readonly("checkpoint_id", &Translator::id)
      .def("translate", &Translator::translate, py::arg("text"), py::arg("beam_size") = 3,
           py::arg("max_len") = 300, py::arg("alpha") = 0.6)
      .def("restore", &Translator::restore, py::arg("text"), py::arg("k") = 10);

  m.def(
      "train",
      [](const std::filesystem::path& prepared, const std::filesystem::path& checkpoints, const py::dict& config) {
        const RunConfig c = run_config_from_json(py_to_json(config));
        const PreparedCorpus prep = load_prepared(prepared);
        const Tokenizer hanja(prep.hanja), korean(prep.korean);
        const ModelConfig mc = with_vocab_sizes(c.model, prep.hanja, prep.korean);
        Model model(mc, c.seed);
        Trainer trainer(model, c.optimizer, c.schedule, make_training_data(prep.splits, hanja, korean, mc));
        TrainOutputs out;
        out.checkpoint_dir = checkpoints;
        out.hanja_vocab = &prep.hanja;
        out.korean_vocab = &prep.korean;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = trainer.run(out);
        }
        py::dict d;
        d["steps_completed"] = r.steps_completed;
        d["diverged"] = r.diverged;
        d["checkpoint"] = r.last_checkpoint ? r.last_checkpoint->string() : std::string();
        py::list log;
        for (const auto& rec : r.log) log.append(json_to_py(to_json(rec)));
        d["log"] = log;
        return d;
      },
      py::arg("prepared_dir"), py::arg("checkpoint_dir"), py::arg("config"),
      "Trains from a prepared corpus with a run configuration dict.");

  // Topics.
  m.def(
      "nmf",
      [](const Eigen::MatrixXd& v, std::size_t k, double alpha, std::size_t max_iter, double tol, std::uint64_t seed) {
        TermDateMatrix tdm;
        tdm.values = v;
        for (Eigen::Index i = 0; i < v.rows(); ++i) tdm.terms.push_back("t" + std::to_string(i));
        for (Eigen::Index i = 0; i < v.cols(); ++i) tdm.dates.push_back("d" + std::to_string(i));
        const TopicModel model = nmf_fit(tdm, {k, alpha, max_iter, tol, seed});
        py::dict d;
        d["w"] = model.w;
        d["h"] = model.h;
        d["objective"] = model.objective;
        d["converged"] = model.converged;
        return d;
      },
      py::arg("v"), py::arg("k"), py::arg("alpha") = 0.1, py::arg("max_iter") = 500, py::arg("tol") = 1e-6,
      py::arg("seed") = 0, "L1-regularized NMF of a non-negative [terms, dates] matrix.");
  m.def(
      "topics",
      [](const py::iterable& records, const std::string& side, const py::dict& config, std::uint64_t seed) {
        const TopicsConfig c = topics_config_from_json(py_to_json(config));
        const Side s = side_from(side);
        std::vector<DatedDocument> docs;
        for (const auto& r : records_from(records)) {
          if (r.side == s && r.date) docs.push_back({r.text, r.date});
        }
        std::unique_ptr<TermTokenizer> tok;
        if (s == Side::kHanja) tok = std::make_unique<CharacterTermTokenizer>();
        else tok = std::make_unique<WhitespaceTermTokenizer>();
        const TopicModel model = nmf_fit(build_term_date_matrix(docs, *tok, c.term_date_options()), c.nmf_options(seed));
        return json_to_py(to_json(topic_report(model, c.top_n), model));
      },
      py::arg("records"), py::arg("side") = "korean", py::arg("config") = py::dict(), py::arg("seed") = 0);

  m.attr("__version__") = "0.1.0";
}
