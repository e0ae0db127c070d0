// Command-line front end for the attack toolkit.
//
//   salattack_cli suite --config exp.json [--budget 1000 ...]
//   salattack_cli attack --weights model.srw --image x.png --label 3 --out adv.png
//   salattack_cli convergence --records out/records.csv --out curve.csv
//   salattack_cli sweep-kint --config exp.json --k 64,32,16
//   salattack_cli compare --a square/records.csv --b square-sal/records.csv --out paired.csv
//   salattack_cli serve --weights model.srw --port 8080

#include <CLI11.hpp>

#include <iostream>

#include "salattack/harness.hpp"

using namespace salattack;

namespace {

// Experiment flags. A flag given on the command line overrides the config file.
struct SpecFlags {
  std::string config, dataset, labels, weights, endpoint, saliency, mode, out;
  std::vector<std::string> attacks;
  std::vector<std::size_t> budgets;
  float epsilon = 0.05f, phi = kDefaultPhi;
  int k_int = 16, resize = 256, channels = 3, classes = 10, workers = 0;
  std::uint64_t seed = 0;
  std::vector<double> thresholds;
  std::map<std::string, CLI::Option*> opts;

  void add(CLI::App& app, bool with_dataset) {
    opts["config"] = app.add_option("--config", config, "JSON experiment config");
    if (with_dataset) {
      opts["dataset"] = app.add_option("--dataset", dataset, "image directory");
      opts["labels"] = app.add_option("--labels", labels, "CSV filename,class_index");
      opts["saliency"] = app.add_option("--saliency", saliency, "saliency map directory or 'builtin'");
      opts["out"] = app.add_option("--out", out, "output directory");
      opts["workers"] = app.add_option("--workers", workers, "parallel attacks (0 = all cores)");
    }
    opts["weights"] = app.add_option("--weights", weights, "SRW1 weight container");
    opts["endpoint"] = app.add_option("--endpoint", endpoint, "classifier endpoint URL");
    opts["attack"] = app.add_option("--attack", attacks, "saliency | square | square-sal | greedy")->delimiter(',');
    opts["mode"] = app.add_option("--mode", mode, "salient | non-salient | no-saliency");
    opts["budget"] = app.add_option("--budget", budgets, "query budget(s)")->delimiter(',');
    opts["epsilon"] = app.add_option("--epsilon", epsilon, "L-inf radius")->capture_default_str();
    opts["phi"] = app.add_option("--phi", phi, "saliency threshold")->capture_default_str();
    opts["k_int"] = app.add_option("--k-int", k_int, "initial block size")->capture_default_str();
    opts["seed"] = app.add_option("--seed", seed, "random seed")->capture_default_str();
    opts["resize"] = app.add_option("--resize", resize, "endpoint input side")->capture_default_str();
    opts["channels"] = app.add_option("--channels", channels, "endpoint input channels")->capture_default_str();
    opts["classes"] = app.add_option("--classes", classes, "endpoint class count")->capture_default_str();
    opts["mad_thresholds"] = app.add_option("--mad-thresholds", thresholds, "MAD thresholds")->delimiter(',');
  }

  bool given(const std::string& name) const {
    const auto it = opts.find(name);
    return it != opts.end() && it->second->count() > 0;
  }

  ExperimentSpec build() const {
    ExperimentSpec s = config.empty() ? ExperimentSpec{} : load_spec(config);
    if (given("dataset")) s.dataset = dataset;
    if (given("labels")) s.labels = labels;
    if (given("weights")) s.weights = weights;
    if (given("endpoint")) s.endpoint = endpoint;
    if (given("saliency")) s.saliency = saliency;
    if (given("attack")) s.attacks = attacks;
    if (given("mode")) s.config.mode = parse_mode(mode);
    if (given("budget")) s.budgets = budgets;
    if (given("epsilon")) s.config.epsilon = epsilon;
    if (given("phi")) s.config.phi = phi;
    if (given("k_int")) s.config.k_int = k_int;
    if (given("seed")) s.config.seed = seed;
    if (given("out")) s.output = out;
    if (given("resize")) s.resize = resize;
    if (given("channels")) s.channels = channels;
    if (given("classes")) s.classes = classes;
    if (given("workers")) s.workers = workers;
    if (given("mad_thresholds")) s.mad_thresholds = thresholds;
    return s;
  }
};

void print_aggregates(const std::vector<RunRecord>& records) {
  for (const auto& r : fold_aggregates(records)) {
    std::cout << r.attack << " mode=" << r.mode << " budget=" << r.budget << " k_int=" << r.k_int
              << "  n=" << r.stats.n << " errors=" << r.errors << " SR=" << r.stats.sr
              << " SR_true=" << r.stats.sr_true << " L0=" << r.stats.l0.mean << " L2=" << r.stats.l2.mean
              << " MAD=" << r.stats.mad.mean << " queries=" << r.mean_queries << '\n';
  }
}

int cmd_suite(const SpecFlags& f) {
  const ExperimentSpec s = f.build();
  validate(s);
  const auto backend = make_backend(s);
  const auto files = run_suite(s, *backend);
  print_aggregates(read_records(files.records));
  std::cout << "records: " << files.records.string() << "\naggregate: " << files.aggregate.string() << '\n';
  return 0;
}

int cmd_sweep(const SpecFlags& f, const std::vector<int>& ks) {
  const ExperimentSpec s = f.build();
  validate(s);
  const auto backend = make_backend(s);
  for (const auto& r : sweep_kint(s, ks, *backend))
    std::cout << "k_int=" << r.k_int << " SR=" << r.sr << " queries=" << r.mean_queries << " L2=" << r.mean_l2
              << " MAD=" << r.mean_mad << '\n';
  std::cout << "sweep: " << (s.output / "sweep.csv").string() << '\n';
  return 0;
}

int cmd_attack(const SpecFlags& f, const std::string& image, int label, const std::string& map,
               const std::string& out) {
  ExperimentSpec s = f.build();
  if (s.weights.empty() == s.endpoint.empty()) throw InvalidInput("give exactly one of --weights or --endpoint");
  if (s.attacks.size() != 1) throw InvalidInput("attack takes exactly one --attack");
  check_common(s.config);
  const auto backend = make_backend(s);
  const InputSpec in = backend->input_spec();
  Image x = load_image(image);
  if (x.height() != in.height || x.width() != in.width) x = resize_bilinear(x, in.height, in.width);
  const SaliencyMap sal = map.empty() ? spectral_residual(x) : load_saliency(map, in.height, in.width);
  AttackConfig c = s.config;
  c.budget = s.budgets.front();
  const AttackOutcome o = run_attack(s.attacks.front(), x, label, binarize(sal, c.phi), *backend, c);
  const auto m = measure(x, o.adversarial);
  std::cout << "success=" << o.success << " prior_misclassified=" << o.prior_misclassified
            << " queries=" << o.queries << " L0=" << m.l0_fraction << " L2=" << m.l2 << " Linf=" << m.linf
            << " MAD=" << m.mad << '\n';
  if (!out.empty()) save_image(o.adversarial, out);
  return 0;
}

int cmd_convergence(const std::string& records, const std::string& attack, std::vector<double> thresholds,
                    std::size_t step, std::size_t max_query, const std::string& out) {
  const auto rs = select_cell(read_records(records), attack);
  if (max_query == 0)
    for (const auto& r : rs) max_query = std::max(max_query, r.budget);
  const auto curve = convergence(rs, thresholds, step, max_query);
  write_curve(curve, out);
  std::cout << "curve: " << out << " (" << curve.size() << " points)\n";
  return 0;
}

int cmd_compare(const std::string& a, const std::string& attack_a, const std::string& b, const std::string& attack_b,
                const std::string& out) {
  const auto c = compare_paired(select_cell(read_records(a), attack_a), select_cell(read_records(b), attack_b));
  write_paired(c, out);
  std::cout << "pairs=" << c.rows.size() << " fraction_b_better=" << c.fraction_b_better << '\n';
  return 0;
}

int cmd_serve(const std::string& weights, const std::string& host, int port, const std::string& path) {
  const EmbeddedBackend backend = EmbeddedBackend::from_file(weights);
  LogitsServer server(backend, host, port, path);
  std::cout << "serving " << server.url() << std::endl;
  server.wait();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box saliency-restricted adversarial attacks"};
  app.require_subcommand(1);

  SpecFlags suite_flags, sweep_flags, attack_flags;
  auto* suite = app.add_subcommand("suite", "attack every image of a dataset");
  suite_flags.add(*suite, true);

  auto* sweep = app.add_subcommand("sweep-kint", "saliency attack suite per initial block size");
  sweep_flags.add(*sweep, true);
  std::vector<int> ks{64, 32, 16};
  sweep->add_option("--k", ks, "k_int values")->delimiter(',')->capture_default_str();

  auto* attack = app.add_subcommand("attack", "attack one image");
  attack_flags.add(*attack, false);
  std::string image, map, adv_out;
  int label = 0;
  attack->add_option("--image", image, "input image")->required()->check(CLI::ExistingFile);
  attack->add_option("--label", label, "ground-truth class")->required();
  attack->add_option("--saliency-map", map, "saliency map (default: spectral residual)")->check(CLI::ExistingFile);
  attack->add_option("--out", adv_out, "adversarial image PNG");

  auto* conv = app.add_subcommand("convergence", "SR_true against queries from a records file");
  std::string records, conv_attack, conv_out = "convergence.csv";
  std::vector<double> thresholds{20, 30, 40};
  std::size_t step = 10, max_query = 0;
  conv->add_option("--records", records, "records CSV")->required()->check(CLI::ExistingFile);
  conv->add_option("--attack", conv_attack, "attack to select from a multi-attack file");
  conv->add_option("--thresholds", thresholds, "MAD thresholds")->delimiter(',')->capture_default_str();
  conv->add_option("--step", step, "query grid step")->capture_default_str();
  conv->add_option("--max-query", max_query, "grid end (default: largest budget)");
  conv->add_option("--out", conv_out, "curve CSV")->capture_default_str();

  auto* cmp = app.add_subcommand("compare", "paired MAD comparison of two record files");
  std::string rec_a, rec_b, attack_a, attack_b, cmp_out = "paired.csv";
  cmp->add_option("--a", rec_a, "records A")->required()->check(CLI::ExistingFile);
  cmp->add_option("--b", rec_b, "records B")->required()->check(CLI::ExistingFile);
  cmp->add_option("--attack-a", attack_a, "attack to select from A");
  cmp->add_option("--attack-b", attack_b, "attack to select from B");
  cmp->add_option("--out", cmp_out, "paired CSV")->capture_default_str();

  auto* serve = app.add_subcommand("serve", "serve an SRW1 model over HTTP");
  std::string serve_weights, host = "127.0.0.1", serve_path = "/predict";
  int port = 8080;
  serve->add_option("--weights", serve_weights, "SRW1 weight container")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--path", serve_path)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (suite->parsed()) return cmd_suite(suite_flags);
    if (sweep->parsed()) return cmd_sweep(sweep_flags, ks);
    if (attack->parsed()) return cmd_attack(attack_flags, image, label, map, adv_out);
    if (conv->parsed()) return cmd_convergence(records, conv_attack, thresholds, step, max_query, conv_out);
    if (cmp->parsed()) return cmd_compare(rec_a, attack_a, rec_b, attack_b, cmp_out);
    if (serve->parsed()) return cmd_serve(serve_weights, host, port, serve_path);
  } catch (const InvalidInput& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
