#include "zero_tta/cli.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "zero_tta/calibration.hpp"
#include "zero_tta/ensemble_theory.hpp"
#include "zero_tta/evaluation.hpp"
#include "zero_tta/manifest.hpp"
#include "zero_tta/mem_lab.hpp"
#include "zero_tta/rng.hpp"
#include "zero_tta/zero_kernel.hpp"
#include "zero_tta/zteb.hpp"

namespace zero_tta {
namespace {

using nlohmann::ordered_json;

// CSV numbers: 12 significant digits, so hand values print as written.
std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  return std::string(buf, r.ptr);
}

struct Common {
  double gamma = kDefaultGamma;
  double tau = kDefaultTau;
  std::string tie_break = "greedy";
  std::uint64_t seed = 0;
  std::size_t bins = kDefaultBins;
  std::string format;
  unsigned threads = 0;
  std::string output;
  CLI::Option* tau_opt = nullptr;
  CLI::Option* format_opt = nullptr;
};

void add_common(CLI::App& app, Common& c) {
  app.add_option("--gamma", c.gamma, "fraction of views kept by the confidence filter, in (0, 1]")
      ->capture_default_str()
      ->check(CLI::Validator(
          [](std::string& s) {
            double g = 0.0;
            const auto r = std::from_chars(s.data(), s.data() + s.size(), g);
            if (r.ec != std::errc() || !(g > 0.0 && g <= 1.0)) return "gamma must be in (0, 1], got " + s;
            return std::string();
          },
          "(0,1]"));
  c.tau_opt = app.add_option("--tau", c.tau, "softmax temperature; manifest commands use the manifest value unless this is given, mem-sweep defaults to 0.1")
                  ->capture_default_str();
  app.add_option("--tie-break", c.tie_break,
                 "greedy | most-confident-prob | per-class-marginal-entropy | max-logit | mean-logit | "
                 "max-logit-per-view | random")
      ->capture_default_str();
  app.add_option("--seed", c.seed, "seed for random tie-breaking and simulations")->capture_default_str();
  app.add_option("--bins", c.bins, "reliability bins")->capture_default_str();
  c.format_opt = app.add_option("--format", c.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--threads", c.threads, "worker threads, 0 = hardware concurrency")->capture_default_str();
  app.add_option("-o,--output", c.output, "write the result here instead of stdout");
}

std::string format_or(const Common& c, const char* fallback) { return c.format.empty() ? fallback : c.format; }

ZeroConfig zero_config(const Common& c, double tau) {
  ZeroConfig cfg;
  cfg.gamma = c.gamma;
  cfg.tau = Temperature(tau);
  const auto s = parse_tie_break(c.tie_break);
  if (!s) throw DomainError("unknown tie-break strategy \"" + c.tie_break + "\"");
  cfg.strategy = *s;
  cfg.seed = c.seed;
  cfg.validate();
  return cfg;
}

double effective_tau(const Common& c, const DatasetManifest* m) {
  if (m && c.tau_opt->count() == 0) return m->temperature;
  return c.tau;
}

void emit(const Common& c, const std::string& text, std::ostream& out) {
  if (c.output.empty()) {
    out << text;
    return;
  }
  std::ofstream f(c.output, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot write " + c.output);
  f << text;
  if (!f) throw Error("write failed for " + c.output);
}

ordered_json result_json(const ZeroResult& r, const std::vector<std::string>& class_names) {
  ordered_json j;
  j["predicted_class"] = r.predicted_class;
  if (r.predicted_class < class_names.size()) j["class_name"] = class_names[r.predicted_class];
  j["vote_counts"] = r.vote_counts;
  j["fractional_votes"] = r.fractional_votes;
  j["tie"] = r.tie_occurred;
  j["tied_classes"] = r.tied_classes;
  j["tie_break_fallback"] = r.tie_break_fallback;
  j["kept_views"] = r.filter_mask.order;
  j["entropies"] = r.filter_mask.entropies;
  j["marginal"] = r.marginal;
  return j;
}

std::string result_csv(const ZeroResult& r) {
  std::ostringstream s;
  s << "class,votes,fractional_votes,marginal,tied\n";
  for (std::size_t c = 0; c < r.vote_counts.size(); ++c) {
    const bool tied = std::find(r.tied_classes.begin(), r.tied_classes.end(), c) != r.tied_classes.end();
    s << c << ',' << r.vote_counts[c] << ',' << num(r.fractional_votes[c]) << ',' << num(r.marginal[c]) << ','
      << (tied ? 1 : 0) << '\n';
  }
  s << "# predicted_class=" << r.predicted_class << " tie=" << r.tie_occurred
    << " fallback=" << r.tie_break_fallback << '\n';
  return s.str();
}

// Rows of "confidence,correct"; a non-numeric first line is taken as a header.
void read_calibration_csv(const std::string& path, std::vector<double>& conf, std::vector<bool>& correct) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(path + ":" + std::to_string(line_no) + ": expected two columns");
    const std::string a = line.substr(0, comma);
    std::string b = line.substr(comma + 1);
    if (const auto c2 = b.find(','); c2 != std::string::npos) b.resize(c2);
    double v = 0.0;
    const auto r = std::from_chars(a.data(), a.data() + a.size(), v);
    if (r.ec != std::errc() || r.ptr != a.data() + a.size()) {
      if (line_no == 1) continue;
      throw Error(path + ":" + std::to_string(line_no) + ": bad confidence \"" + a + "\"");
    }
    bool ok = false;
    if (b == "1" || b == "true" || b == "True") {
      ok = true;
    } else if (b != "0" && b != "false" && b != "False") {
      throw Error(path + ":" + std::to_string(line_no) + ": bad correctness flag \"" + b + "\"");
    }
    conf.push_back(v);
    correct.push_back(ok);
  }
}

std::string bins_csv(const ReliabilityBins& bins) {
  std::ostringstream s;
  s << "bin,lower,upper,count,accuracy,confidence\n";
  for (std::size_t i = 0; i < bins.bins.size(); ++i) {
    const auto& b = bins.bins[i];
    s << i << ',' << num(b.lower) << ',' << num(b.upper) << ',' << b.count << ',' << num(b.accuracy) << ','
      << num(b.confidence) << '\n';
  }
  return s.str();
}

std::vector<Method> default_methods(const LoadedDataset& data) {
  std::vector<Method> m{Method::ZeroShot, Method::Zero};
  if (data.templates.size() >= 2) m.push_back(Method::ZeroEnsemble);
  return m;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"ZERO test-time adaptation over precomputed embeddings", "zero_tta"};
  app.require_subcommand(1);
  app.fallthrough();
  Common c;
  add_common(app, c);

  auto* predict = app.add_subcommand("predict", "run ZERO on one sample");
  std::string manifest_path, sample_id, views_path;
  std::vector<std::string> text_paths;
  predict->add_option("--manifest", manifest_path, "dataset manifest");
  predict->add_option("--sample", sample_id, "sample_id within the manifest");
  predict->add_option("--views", views_path, "N x D view embeddings (instead of --manifest)");
  predict->add_option("--text", text_paths, "C x D text embeddings; several files are averaged");
  bool ensemble = false;
  predict->add_flag("--ensemble", ensemble, "average all of the manifest's templates");

  auto* evaluate = app.add_subcommand("evaluate", "evaluate a manifest");
  std::string eval_manifest;
  std::vector<std::string> method_names;
  evaluate->add_option("manifest", eval_manifest, "dataset manifest")->required();
  evaluate->add_option("--methods", method_names, "zero_shot, zero, zero_ensemble (default: all available)")
      ->delimiter(',');

  auto* calibrate = app.add_subcommand("calibrate", "ECE and reliability bins from confidence,correct CSV");
  std::string calib_input, bins_output;
  calibrate->add_option("input", calib_input, "CSV with columns confidence,correct")->required();
  calibrate->add_option("--bins-csv", bins_output, "also write the per-bin table here");

  auto* theory = app.add_subcommand("ensemble-theory", "majority-vote error over N and epsilon");
  std::vector<double> epsilons{0.3};
  std::vector<std::int64_t> ns{1, 3, 5, 7, 9};
  std::int64_t mc_trials = 0;
  theory->add_option("--epsilon", epsilons, "per-voter error rates")->delimiter(',')->capture_default_str();
  theory->add_option("--n", ns, "voter counts")->delimiter(',')->capture_default_str();
  theory->add_option("--mc-trials", mc_trials, "also simulate with this many trials")->capture_default_str();

  auto* sweep = app.add_subcommand("mem-sweep", "invariance of the MEM argmax under one gradient step");
  std::size_t trials = 1000, entropy_bins = 10;
  MemConfig mem;
  ToyDims dims;
  sweep->add_option("--trials", trials)->capture_default_str();
  sweep->add_option("--lambda", mem.lambda, "step size")->capture_default_str();
  sweep->add_option("--entropy-bins", entropy_bins)->capture_default_str();
  sweep->add_option("--views", dims.n_views)->capture_default_str();
  sweep->add_option("--classes", dims.classes)->capture_default_str();
  sweep->add_option("--dim", dims.dim)->capture_default_str();

  auto* risk = app.add_subcommand("risk-check", "risk bound of the view marginal on a manifest");
  std::string risk_manifest;
  risk->add_option("manifest", risk_manifest, "dataset manifest")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*predict) {
      std::optional<DatasetManifest> m;
      std::optional<EmbeddingMatrix> views, text;
      std::vector<std::string> class_names;
      std::uint64_t stream = 0;
      if (!manifest_path.empty()) {
        if (sample_id.empty()) throw Error("predict: --manifest needs --sample");
        m = load_manifest(manifest_path);
        auto one = *m;
        const auto it = std::find_if(m->samples.begin(), m->samples.end(),
                                     [&](const SampleRecord& s) { return s.sample_id == sample_id; });
        if (it == m->samples.end()) throw Error("predict: no sample \"" + sample_id + "\" in " + manifest_path);
        one.samples = {*it};
        auto data = load_dataset(one);
        views = data.views.front();
        text = ensemble ? ensemble_text_embeddings(data.templates) : data.templates.front();
        class_names = m->class_names;
        stream = fnv1a(sample_id);
      } else {
        if (views_path.empty() || text_paths.empty()) throw Error("predict: give --manifest/--sample or --views/--text");
        views = read_embedding_file(views_path);
        std::vector<EmbeddingMatrix> templates;
        for (const auto& p : text_paths) templates.push_back(read_embedding_file(p));
        text = templates.size() == 1 ? templates.front() : ensemble_text_embeddings(templates);
      }
      const auto cfg = zero_config(c, effective_tau(c, m ? &*m : nullptr));
      const auto r = zero_predict(*views, *text, cfg, stream);
      emit(c, format_or(c, "json") == "json" ? result_json(r, class_names).dump(2) + "\n" : result_csv(r), out);
    } else if (*evaluate) {
      const auto m = load_manifest(eval_manifest);
      const auto cfg = zero_config(c, effective_tau(c, &m));
      const auto data = load_dataset(m);
      std::vector<Method> methods;
      for (const auto& name : method_names) {
        const auto parsed = parse_method(name);
        if (!parsed) throw Error("unknown method \"" + name + "\"");
        methods.push_back(*parsed);
      }
      if (methods.empty()) methods = default_methods(data);
      const auto report = evaluate_dataset(data, methods, cfg, c.threads);
      emit(c, format_or(c, "json") == "json" ? report_to_json(report) : report_to_csv(report), out);
    } else if (*calibrate) {
      std::vector<double> conf;
      std::vector<bool> correct;
      read_calibration_csv(calib_input, conf, correct);
      const auto report = calibration_report(conf, correct, c.bins);
      if (!bins_output.empty()) {
        std::ofstream f(bins_output, std::ios::trunc);
        if (!f) throw Error("cannot write " + bins_output);
        f << bins_csv(report.bins);
      }
      if (format_or(c, "json") == "json") {
        ordered_json j;
        j["samples"] = report.bins.total;
        j["bins"] = report.bins.bins.size();
        j["occupied_bins"] = report.bins.occupied();
        j["ece"] = report.ece_unweighted;
        j["ece_count_weighted"] = report.ece_weighted;
        j["overconfident_bin_fraction"] = report.overconfident_bin_fraction;
        j["top1_accuracy"] = report.top1_accuracy;
        emit(c, j.dump(2) + "\n", out);
      } else {
        emit(c, bins_csv(report.bins), out);
      }
    } else if (*theory) {
      std::sort(ns.begin(), ns.end());
      ordered_json rows = ordered_json::array();
      std::ostringstream csv;
      csv << "n,epsilon,majority_error,half_split_mass";
      if (mc_trials > 0) csv << ",mc_estimate,mc_standard_error,mc_half_split_rate";
      csv << '\n';
      for (double eps : epsilons) {
        for (auto n : ns) {
          const EnsembleParams p{n, eps};
          p.validate();
          const double e = majority_error(p);
          const double h = half_split_mass(p);
          ordered_json row{{"n", n}, {"epsilon", eps}, {"majority_error", e}, {"half_split_mass", h}};
          csv << n << ',' << num(eps) << ',' << num(e) << ',' << num(h);
          if (mc_trials > 0) {
            const auto mc = monte_carlo_majority_error(p, mc_trials, derive_seed(c.seed, static_cast<std::uint64_t>(n)),
                                                       c.threads);
            row["mc_estimate"] = mc.estimate;
            row["mc_standard_error"] = mc.standard_error;
            row["mc_half_split_rate"] = mc.half_split_rate;
            csv << ',' << num(mc.estimate) << ',' << num(mc.standard_error) << ',' << num(mc.half_split_rate);
          }
          csv << '\n';
          rows.push_back(std::move(row));
        }
      }
      emit(c, format_or(c, "csv") == "json" ? rows.dump(2) + "\n" : csv.str(), out);
    } else if (*sweep) {
      if (c.tau_opt->count() > 0) mem.tau = Temperature(c.tau);
      mem.gamma = c.gamma;
      mem.validate();
      const auto s = invariance_sweep(trials, dims, mem, entropy_bins, c.seed, c.threads);
      if (format_or(c, "csv") == "json") {
        ordered_json j;
        j["trials"] = s.trials.size();
        j["lambda"] = mem.lambda;
        j["overall_invariance_ratio"] = s.overall_ratio;
        j["trend_spearman"] = s.trend_spearman ? ordered_json(*s.trend_spearman) : ordered_json(nullptr);
        ordered_json bins = ordered_json::array();
        for (const auto& b : s.bins) {
          bins.push_back({{"entropy_max", b.entropy_max},
                          {"entropy_min", b.entropy_min},
                          {"trials", b.trials},
                          {"invariant", b.invariant},
                          {"ratio", b.ratio}});
        }
        j["entropy_bins"] = bins;
        emit(c, j.dump(2) + "\n", out);
      } else {
        std::ostringstream csv;
        csv << "trial,seed,entropy_pre,entropy_post,argmax_pre,argmax_post,condition_lhs,condition_rhs,"
               "condition_rhs_lambda,condition_holds,invariant\n";
        for (const auto& t : s.trials) {
          const auto& r = t.record;
          csv << t.trial << ',' << t.seed << ',' << num(r.entropy_pre) << ',' << num(r.entropy_post) << ','
              << r.argmax_pre << ',' << r.argmax_post << ',' << num(r.condition_lhs) << ',' << num(r.condition_rhs)
              << ',' << num(r.condition_rhs_lambda) << ',' << r.condition_holds << ',' << r.invariant << '\n';
        }
        emit(c, csv.str(), out);
      }
    } else if (*risk) {
      const auto m = load_manifest(risk_manifest);
      const Temperature tau(effective_tau(c, &m));
      const auto s = risk_check_dataset(load_dataset(m), tau);
      if (format_or(c, "json") == "json") {
        ordered_json j;
        j["dataset"] = m.dataset;
        j["tau"] = tau.value();
        j["samples"] = s.samples;
        j["l1"] = {{"holds", s.holds_l1}, {"mean_lhs", s.mean_lhs_l1}, {"mean_rhs", s.mean_rhs_l1}};
        j["l2"] = {{"holds", s.holds_l2}, {"mean_lhs", s.mean_lhs_l2}, {"mean_rhs", s.mean_rhs_l2}};
        emit(c, j.dump(2) + "\n", out);
      } else {
        std::ostringstream csv;
        csv << "loss,samples,holds,mean_lhs,mean_rhs\n"
            << "l1," << s.samples << ',' << s.holds_l1 << ',' << num(s.mean_lhs_l1) << ',' << num(s.mean_rhs_l1)
            << '\n'
            << "l2," << s.samples << ',' << s.holds_l2 << ',' << num(s.mean_lhs_l2) << ',' << num(s.mean_rhs_l2)
            << '\n';
        emit(c, csv.str(), out);
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace zero_tta
