// SPDX-License-Identifier: Apache-2.0
#include "hmt/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "hmt/error.hpp"

namespace hmt {

TranslationEval evaluate_translation(const Model& model, const std::vector<ParallelPair>& pairs,
                                     const Tokenizer& hanja, const Tokenizer& korean, const DecodeOptions& decode) {
  TranslationEval out;
  std::vector<Segment> hyps, refs;
  for (const auto& p : pairs) {
    auto rec = translate_text(model, hanja, korean, p.hanja.id, p.hanja.text, decode);
    hyps.push_back(korean.pieces(rec.hypothesis));
    refs.push_back(korean.pieces(p.korean.text));
    out.outputs.push_back(std::move(rec));
  }
  out.bleu = bleu(hyps, refs);
  out.rouge_l = rouge_l(hyps, refs);
  return out;
}

std::vector<EvalReport> evaluate_restoration(const Model& model, const std::vector<std::vector<TokenId>>& sentences,
                                             const MaskingOptions& masking, std::uint64_t seed,
                                             const std::vector<std::size_t>& ks) {
  if (sentences.empty()) throw ValueError("evaluate_restoration: no sentences");
  const std::size_t k = *std::max_element(ks.begin(), ks.end());
  Rng rng(seed);
  std::vector<std::vector<TokenId>> candidates;
  std::vector<TokenId> truths;
  for (const auto& s : sentences) {
    const MaskedSentence m = mask_ngram(s, masking, rng);
    for (const auto& pc : restore_topk(model, m.inputs, k)) {
      std::vector<TokenId> ids;
      for (const auto& c : pc.candidates) ids.push_back(c.token);
      candidates.push_back(std::move(ids));
      truths.push_back(m.targets[pc.position]);
    }
  }
  return hits_at_k(candidates, truths, ks);
}

}  // namespace hmt

// ---------------------------------------------------------------------------
// Table reproductions

namespace hmt {

using json = nlohmann::json;

namespace {

struct ReferenceTranslation {
  const char* model;
  std::size_t beam;
  double bleu, meteor, rouge_l;
};

constexpr ReferenceTranslation kTable5[] = {
    {"Base", 1, 0.3547, 0.3488, 0.6082},
    {"Base", 3, 0.3536, 0.3482, 0.6127},
    {"Full", 1, 0.5269, 0.4594, 0.7463},
    {"Full", 3, 0.5410, 0.4719, 0.7606},
};

struct ReferenceHits {
  const char* model;
  double hits1, hits5, hits10;
};

constexpr ReferenceHits kTable3[] = {
    {"Baseline", 0.7783, 0.8829, 0.9089},
    {"Full", 0.7520, 0.8621, 0.8909},
};

struct ReferenceScheme {
  const char* scheme;
  TrainMode mode;
  double bleu;
};

constexpr ReferenceScheme kTable6[] = {
    {"multi-task", TrainMode::kMultitask, 0.5410},
    {"scratch", TrainMode::kTranslationOnly, 0.3536},
    {"pipelining", TrainMode::kPretrainThenFinetune, 0.3755},
};

std::string fmt(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

struct Stat {
  double mean = 0.0, sd = 0.0;
  std::vector<double> values;
};

Stat stat_of(const std::vector<ConditionRun>& runs, TrainMode mode,
             const std::function<double(const ConditionRun&)>& score) {
  Stat s;
  for (const auto& r : runs) {
    if (r.mode == mode) s.values.push_back(score(r));
  }
  if (s.values.empty()) throw ValueError(std::string("no runs for mode ") + train_mode_name(mode));
  for (double v : s.values) s.mean += v;
  s.mean /= static_cast<double>(s.values.size());
  if (s.values.size() > 1) {
    for (double v : s.values) s.sd += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(s.sd / static_cast<double>(s.values.size() - 1));
  }
  return s;
}

json stat_json(const Stat& s) { return {{"mean", s.mean}, {"sd", s.sd}, {"per_seed", s.values}}; }

std::string stat_md(const Stat& s) { return fmt(s.mean) + " ± " + fmt(s.sd); }

std::vector<std::string> budget_warnings(const ToyExperiment& e) {
  std::vector<std::string> w;
  if (e.steps < e.recommended_steps) {
    w.push_back("step budget " + std::to_string(e.steps) + " is below the recommended " +
                std::to_string(e.recommended_steps) + "; desk numbers are not converged");
  }
  if (e.seeds.size() < 3) w.push_back("fewer than 3 seeds; means are noisy");
  return w;
}

std::string header(const ToyExperiment& e, const std::string& title) {
  std::string s = "## " + title + "\n\nToy scale: " + std::to_string(e.data.paired) + " pairs, " +
                  std::to_string(e.data.unpaired) + " unpaired sentences, " + std::to_string(e.data.test) +
                  " held-out pairs, " + std::to_string(e.steps) + " steps, seeds";
  for (auto seed : e.seeds) s += " " + std::to_string(seed);
  return s + ". Desk values are mean ± sd over seeds.\n\n";
}

std::string footer(const std::vector<std::string>& warnings) {
  std::string s;
  for (const auto& w : warnings) s += "\n> warning: " + w + "\n";
  return s;
}

}  // namespace

ToyExperiment ToyExperiment::standard() {
  ToyExperiment e;
  e.data.concepts = 30;
  e.data.successors = 2;
  e.corpus.hanja_min_count = 0;
  e.corpus.korean_vocab_size = 300;
  e.corpus.bounds = {1, 64, 1, 64};
  e.model.d_emb = 32;
  e.model.d_model = 64;
  e.model.d_ffn = 256;
  e.model.n_heads = 4;
  e.model.layers_shared = 2;
  e.model.layers_restore = 2;
  e.model.layers_decoder = 1;
  e.model.max_len_hanja = 16;
  e.model.max_len_korean = 20;
  e.model.dropout = 0.1;
  e.optimizer.lr = 1e-2;
  return e;
}

json to_json(const ToyExperiment& e) {
  return {{"concepts", e.data.concepts},
          {"successors", e.data.successors},
          {"paired", e.data.paired},
          {"unpaired", e.data.unpaired},
          {"test", e.data.test},
          {"variant_rate", e.data.variant_rate},
          {"paired_variant_rate", e.data.paired_variant_rate},
          {"model", to_json(e.model)},
          {"optimizer", to_json(e.optimizer)},
          {"steps", e.steps},
          {"batch_size", e.batch_size},
          {"seeds", e.seeds},
          {"beam_size", e.beam_size},
          {"max_decode_len", e.max_decode_len},
          {"alpha", e.alpha}};
}

ToyExperiment toy_experiment_from_json(const json& j) {
  if (!j.is_object()) throw ValueError("experiment config must be an object");
  ToyExperiment e = ToyExperiment::standard();
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "concepts") e.data.concepts = v.get<std::size_t>();
      else if (key == "successors") e.data.successors = v.get<std::size_t>();
      else if (key == "paired") e.data.paired = v.get<std::size_t>();
      else if (key == "unpaired") e.data.unpaired = v.get<std::size_t>();
      else if (key == "test") e.data.test = v.get<std::size_t>();
      else if (key == "variant_rate") e.data.variant_rate = v.get<double>();
      else if (key == "paired_variant_rate") e.data.paired_variant_rate = v.get<double>();
      else if (key == "model") {
        json m = to_json(e.model);
        m.update(v);
        e.model = model_config_from_json(m);
      } else if (key == "optimizer") e.optimizer = optimizer_config_from_json(v);
      else if (key == "steps") e.steps = v.get<std::size_t>();
      else if (key == "batch_size") e.batch_size = v.get<std::size_t>();
      else if (key == "seeds") e.seeds = v.get<std::vector<std::uint64_t>>();
      else if (key == "beam_size") e.beam_size = v.get<std::size_t>();
      else if (key == "max_decode_len") e.max_decode_len = v.get<std::size_t>();
      else if (key == "alpha") e.alpha = v.get<double>();
      else throw ValueError("unknown experiment key '" + key + "'");
    } catch (const json::exception& ex) {
      throw ValueError("experiment." + key + ": " + ex.what());
    }
  }
  if (e.seeds.empty()) throw ValueError("experiment.seeds must not be empty");
  return e;
}

ConditionRun run_condition(const ToyExperiment& e, TrainMode mode, std::uint64_t seed, const RunRequest& request) {
  const auto t0 = std::chrono::steady_clock::now();
  LowResourceOptions data = e.data;
  data.seed = e.data.seed + 100 + seed;
  const LowResourceCorpus corpus = low_resource_corpus(data);
  const PreparedCorpus prep = prepare_corpus(corpus.train, e.corpus, seed);
  const Tokenizer hanja(prep.hanja), korean(prep.korean);
  const ModelConfig mc = with_vocab_sizes(e.model, prep.hanja, prep.korean);
  Model model(mc, seed);

  TrainSchedule schedule;
  schedule.mode = mode;
  schedule.total_steps = e.steps;
  schedule.batch_size = e.batch_size;
  schedule.log_every = std::max<std::size_t>(1, e.steps / 10);
  schedule.seed = seed;
  Trainer trainer(model, e.optimizer, schedule, make_training_data(prep.splits, hanja, korean, mc));
  const TrainResult trained = trainer.run();
  if (trained.diverged) throw NumericError("toy run diverged: " + trained.message);

  ConditionRun run;
  run.mode = mode;
  run.seed = seed;
  const ParallelCorpus test = group_pairs(corpus.test);
  if (request.translation && mode != TrainMode::kRestorationOnly) {
    DecodeOptions d;
    d.max_len = e.max_decode_len;
    d.alpha = e.alpha;
    d.beam_size = 1;
    run.greedy = evaluate_translation(model, test.paired, hanja, korean, d);
    d.beam_size = e.beam_size;
    run.beam = evaluate_translation(model, test.paired, hanja, korean, d);
    std::vector<std::string> hyps, refs;
    for (std::size_t i = 0; i < test.paired.size(); ++i) {
      hyps.push_back(run.beam->outputs[i].hypothesis);
      refs.push_back(test.paired[i].korean.text);
    }
    run.chrf_beam = chrf(hyps, refs);
  }
  if (request.restoration && mode != TrainMode::kTranslationOnly) {
    std::vector<std::vector<TokenId>> sentences;
    for (const auto& p : test.paired) sentences.push_back(hanja.encode(p.hanja.text));
    run.hits = evaluate_restoration(model, sentences, schedule.masking, seed);
  }
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

std::vector<ConditionRun> run_grid(const ToyExperiment& e, const std::vector<TrainMode>& modes,
                                   const RunRequest& request, const ProgressFn& progress) {
  std::vector<ConditionRun> runs;
  for (auto seed : e.seeds) {
    for (auto mode : modes) {
      runs.push_back(run_condition(e, mode, seed, request));
      if (progress) {
        const auto& r = runs.back();
        std::string line = std::string(train_mode_name(mode)) + " seed " + std::to_string(seed);
        if (r.beam) line += " bleu@" + std::to_string(e.beam_size) + " " + fmt(r.beam->bleu.value);
        if (!r.hits.empty()) line += " hits@1 " + fmt(r.hits[0].value);
        progress(line + " (" + fmt(r.seconds, 1) + " s)");
      }
    }
  }
  return runs;
}

double mean_score(const std::vector<ConditionRun>& runs, TrainMode mode,
                  const std::function<double(const ConditionRun&)>& score) {
  return stat_of(runs, mode, score).mean;
}

json Reproduction::to_json() const {
  return {{"table", table}, {"rows", rows}, {"warnings", warnings}};
}

Reproduction table3_report(const ToyExperiment& e, const std::vector<ConditionRun>& runs) {
  Reproduction out;
  out.table = "table3";
  out.warnings = budget_warnings(e);
  out.markdown = header(e, "Restoration HITS@K (Table 3 layout)") +
                 "| Model | HITS@1 desk | HITS@1 ref | HITS@5 desk | HITS@5 ref | HITS@10 desk | HITS@10 ref |\n"
                 "|---|---|---|---|---|---|---|\n";
  const std::pair<TrainMode, const ReferenceHits*> rows[] = {{TrainMode::kRestorationOnly, &kTable3[0]},
                                                          {TrainMode::kMultitask, &kTable3[1]}};
  for (const auto& [mode, ref] : rows) {
    Stat h[3];
    for (std::size_t i = 0; i < 3; ++i) h[i] = stat_of(runs, mode, [i](const ConditionRun& r) { return r.hits.at(i).value; });
    const double p[3] = {ref->hits1, ref->hits5, ref->hits10};
    out.rows.push_back({{"model", ref->model},
                        {"mode", train_mode_name(mode)},
                        {"desk", {{"hits@1", stat_json(h[0])}, {"hits@5", stat_json(h[1])}, {"hits@10", stat_json(h[2])}}},
                        {"reference", {{"hits@1", p[0]}, {"hits@5", p[1]}, {"hits@10", p[2]}}}});
    out.markdown += std::string("| ") + ref->model + " (" + train_mode_name(mode) + ")";
    for (std::size_t i = 0; i < 3; ++i) out.markdown += " | " + stat_md(h[i]) + " | " + fmt(p[i]);
    out.markdown += " |\n";
  }
  out.markdown += footer(out.warnings);
  return out;
}

Reproduction table5_report(const ToyExperiment& e, const std::vector<ConditionRun>& runs) {
  Reproduction out;
  out.table = "table5";
  out.warnings = budget_warnings(e);
  if (e.beam_size != 3) out.warnings.push_back("beam_size is not 3; reference rows use beams 1 and 3");
  out.markdown = header(e, "Translation (Table 5 layout)") +
                 "| Model | Beam | BLEU desk | BLEU ref | ROUGE-L desk | ROUGE-L ref | METEOR ref | chrF desk (no reference) |\n"
                 "|---|---|---|---|---|---|---|---|\n";
  for (const auto& ref : kTable5) {
    const TrainMode mode = std::string(ref.model) == "Base" ? TrainMode::kTranslationOnly : TrainMode::kMultitask;
    const bool greedy = ref.beam == 1;
    const auto eval = [greedy](const ConditionRun& r) -> const TranslationEval& { return greedy ? *r.greedy : *r.beam; };
    const Stat b = stat_of(runs, mode, [&](const ConditionRun& r) { return eval(r).bleu.value; });
    const Stat rl = stat_of(runs, mode, [&](const ConditionRun& r) { return eval(r).rouge_l.value; });
    json row = {{"model", ref.model},
                {"mode", train_mode_name(mode)},
                {"beam", greedy ? 1 : e.beam_size},
                {"desk", {{"bleu", stat_json(b)}, {"rouge_l", stat_json(rl)}}},
                {"reference", {{"bleu", ref.bleu}, {"meteor", ref.meteor}, {"rouge_l", ref.rouge_l}}}};
    std::string chrf_md = "n/a";
    if (!greedy) {
      const Stat c = stat_of(runs, mode, [](const ConditionRun& r) { return r.chrf_beam->value; });
      row["desk"]["chrf"] = stat_json(c);
      chrf_md = stat_md(c);
    }
    out.rows.push_back(row);
    out.markdown += std::string("| ") + ref.model + " (" + train_mode_name(mode) + ") | " +
                    std::to_string(greedy ? 1 : e.beam_size) + " | " + stat_md(b) + " | " + fmt(ref.bleu) + " | " +
                    stat_md(rl) + " | " + fmt(ref.rouge_l) + " | " + fmt(ref.meteor) + " | " + chrf_md + " |\n";
  }
  out.markdown += footer(out.warnings);
  return out;
}

Reproduction table6_report(const ToyExperiment& e, const std::vector<ConditionRun>& runs) {
  Reproduction out;
  out.table = "table6";
  out.warnings = budget_warnings(e);
  out.markdown = header(e, "Training schemes (Table 6 layout), BLEU at beam " + std::to_string(e.beam_size)) +
                 "| Scheme | BLEU desk | BLEU ref |\n|---|---|---|\n";
  for (const auto& ref : kTable6) {
    const Stat b = stat_of(runs, ref.mode, [](const ConditionRun& r) { return r.beam->bleu.value; });
    out.rows.push_back({{"scheme", ref.scheme},
                        {"mode", train_mode_name(ref.mode)},
                        {"desk", {{"bleu", stat_json(b)}}},
                        {"reference", {{"bleu", ref.bleu}}}});
    out.markdown += std::string("| ") + ref.scheme + " (" + train_mode_name(ref.mode) + ") | " + stat_md(b) +
                    " | " + fmt(ref.bleu) + " |\n";
  }
  out.markdown += footer(out.warnings);
  return out;
}

Reproduction reproduce(const std::string& table, const ToyExperiment& e, const ProgressFn& progress) {
  if (table == "table3") {
    return table3_report(e, run_grid(e, {TrainMode::kRestorationOnly, TrainMode::kMultitask}, {false, true}, progress));
  }
  if (table == "table5") {
    return table5_report(e, run_grid(e, {TrainMode::kTranslationOnly, TrainMode::kMultitask}, {true, false}, progress));
  }
  if (table == "table6") {
    return table6_report(e, run_grid(e,
                                     {TrainMode::kTranslationOnly, TrainMode::kMultitask,
                                      TrainMode::kPretrainThenFinetune},
                                     {true, false}, progress));
  }
  throw ValueError("unknown table '" + table + "' (expected table3, table5 or table6)");
}

}  // namespace hmt
