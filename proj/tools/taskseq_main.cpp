// taskseq: generate sequencing-problem datasets, meta-train the in-context
// proposer, evaluate search strategies, and export benchmark reports.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <thread>

#include <CLI11.hpp>

#include "taskseq/config.hpp"
#include "taskseq/datastore.hpp"
#include "taskseq/harness.hpp"
#include "taskseq/trainer.hpp"

namespace ts = taskseq;

namespace {

std::uint64_t env_seed_default() {
  if (const char* s = std::getenv("TASKSEQ_SEED")) return std::strtoull(s, nullptr, 10);
  return 0;
}

int env_workers_default() {
  if (const char* s = std::getenv("TASKSEQ_WORKERS")) return std::max(1, std::atoi(s));
  return 1;
}

ts::RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return ts::default_run_config();
  return ts::load_run_config(path);
}

struct EvalJob {
  std::string method;
  const ts::Pftsn* model = nullptr;
  double temperature = 1.0;
  bool greedy = false;
  int context_cap = 16;
  int iterations = 32;
  int init_context = 4;
  std::uint64_t seed = 0;
  double alpha = ts::kDefaultAlpha;
};

std::unique_ptr<ts::Strategy> make_strategy(const EvalJob& job, const ts::TSProblem& p,
                                            std::size_t index) {
  const int n = p.config.num_tasks;
  const int l = p.config.sequence_length;
  if (job.method == "random") return std::make_unique<ts::RandomStrategy>(n, l);
  if (job.method == "rule") return std::make_unique<ts::RuleStrategy>(n, l);
  if (job.method == "ddqn") {
    ts::DdqnConfig cfg;
    cfg.total_proposals = job.iterations;
    cfg.seed = ts::derive_seed(ts::derive_seed(job.seed, index), 0xDDull);
    return std::make_unique<ts::DdqnStrategy>(n, l, cfg);
  }
  if (job.method == "pftsn")
    return std::make_unique<ts::PftsnStrategy>(job.model, job.temperature, job.greedy,
                                               job.context_cap);
  throw std::invalid_argument("unknown method: " + job.method);
}

std::vector<ts::Trace> evaluate_suite(const EvalJob& job,
                                      const std::vector<ts::ProblemRecord>& problems,
                                      int workers) {
  std::vector<ts::Trace> traces(problems.size());
  auto run_one = [&](std::size_t i) {
    auto strategy = make_strategy(job, problems[i].problem, i);
    ts::Rng rng(ts::derive_seed(job.seed, i));
    traces[i] = ts::run_protocol(problems[i].problem, *strategy, job.iterations,
                                 job.init_context, rng, job.alpha);
  };
  if (workers <= 1) {
    for (std::size_t i = 0; i < problems.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = cursor.fetch_add(1);
          if (i >= problems.size()) return;
          run_one(i);
        }
      });
    for (auto& t : pool) t.join();
  }
  return traces;
}

void write_csv(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + tmp);
  out << content;
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + tmp);
  out.close();
  std::filesystem::rename(tmp, path);
}

// mean iterations until the final best was first reached, and the mean
// proposal seconds spent up to that point
std::pair<double, double> convergence_stats(const std::vector<ts::Trace>& traces) {
  double iter_sum = 0.0, secs_sum = 0.0;
  for (const auto& t : traces) {
    const double final_best = t.best_at(static_cast<int>(t.steps.size()));
    std::size_t reach = t.steps.size();
    double secs = 0.0;
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
      secs += t.steps[i].proposal_seconds;
      if (t.steps[i].best_u_bar == final_best) {
        reach = i + 1;
        break;
      }
    }
    iter_sum += static_cast<double>(reach);
    secs_sum += secs;
  }
  const auto n = static_cast<double>(traces.size());
  return {iter_sum / n, secs_sum / n};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-sequencing optimization workbench"};
  app.require_subcommand(1);

  std::string config_path, out_path, dataset_path, model_path, split = "train";
  std::string method, out_prefix;
  std::vector<std::string> trace_paths;
  int num_problems = 128;
  std::uint64_t seed = env_seed_default();
  int workers = env_workers_default();
  int steps_override = -1;
  int iterations_override = -1;
  int init_context_override = -1;
  double temperature_override = -1.0;
  bool greedy = false;
  bool show = false;

  auto* gen = app.add_subcommand("generate", "sample problems and write a dataset");
  gen->add_option("--config", config_path, "run configuration file");
  gen->add_option("--out", out_path, "output dataset path")->required();
  gen->add_option("--num-problems", num_problems, "problems to generate");
  gen->add_option("--seed", seed, "generation seed");
  gen->add_option("--split", split, "split label recorded in the header");
  gen->add_option("--workers", workers, "worker threads");
  gen->add_flag("--show-config", show, "print the resolved configuration and exit");

  auto* train = app.add_subcommand("train", "meta-train the in-context proposer");
  train->add_option("--config", config_path, "run configuration file");
  train->add_option("--out", out_path, "output directory for checkpoints and log");
  train->add_option("--dataset", dataset_path, "train from a serialized dataset");
  train->add_option("--steps", steps_override, "override train.steps");
  train->add_option("--seed", seed, "override train.seed");
  train->add_flag("--show-config", show, "print the resolved configuration and exit");

  auto* eval = app.add_subcommand("evaluate", "run the iterative search protocol");
  eval->add_option("--config", config_path, "run configuration file");
  eval->add_option("--problems", dataset_path, "problem dataset to evaluate on")
      ->required();
  eval->add_option("--method", method, "pftsn|random|rule|ddqn")->required();
  eval->add_option("--model", model_path, "checkpoint (required for pftsn)");
  eval->add_option("--iterations", iterations_override, "proposal iterations");
  eval->add_option("--init-context", init_context_override, "initial random sequences");
  eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("--out", out_path, "output trace file")->required();
  eval->add_option("--workers", workers, "worker threads");
  eval->add_option("--temperature", temperature_override, "sampling temperature");
  eval->add_flag("--greedy", greedy, "argmax decoding instead of sampling");
  eval->add_flag("--show-config", show, "print the resolved configuration and exit");

  auto* report = app.add_subcommand("report", "aggregate traces into benchmark tables");
  report->add_option("--traces", trace_paths, "trace files (one per method)")
      ->required()
      ->expected(-1);
  report->add_option("--out-prefix", out_prefix, "output path prefix")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ts::RunConfig cfg = load_config_or_default(config_path);
      if (show) {
        std::cout << ts::show_config(cfg);
        return 0;
      }
      cfg.prior.validate();
      ts::DatasetHeader header;
      header.prior = cfg.prior;
      header.num_problems = num_problems;
      header.random_per_problem = cfg.data.random_per_problem;
      header.mutated_per_problem = cfg.data.mutated_per_problem;
      header.seed = seed;
      header.split = split;
      header.alpha = cfg.alpha;
      ts::write_dataset(header, out_path, workers);
      std::cout << "wrote " << num_problems << " problems to " << out_path << "\n";
      return 0;
    }

    if (train->parsed()) {
      ts::RunConfig cfg = load_config_or_default(config_path);
      if (steps_override > 0) cfg.train.steps = steps_override;
      if (train->count("--seed") > 0 || std::getenv("TASKSEQ_SEED"))
        cfg.train.seed = seed;
      if (show) {
        std::cout << ts::show_config(cfg);
        return 0;
      }
      if (out_path.empty())
        throw std::invalid_argument("train: --out is required");
      ts::ProblemSource source;
      ts::Dataset ds;
      if (!dataset_path.empty()) {
        ds = ts::read_dataset(dataset_path);
        if (ds.header.prior.num_tasks != cfg.prior.num_tasks ||
            ds.header.prior.sequence_length != cfg.prior.sequence_length)
          throw std::runtime_error("train: dataset prior does not match the config");
        auto cursor = std::make_shared<std::size_t>(0);
        source = [&ds, cursor](ts::Rng&) {
          const auto& rec = ds.problems[*cursor % ds.problems.size()];
          ++*cursor;
          return ts::TrainProblem{rec.problem, rec.random_pool, rec.mutated_pool};
        };
      } else {
        source = ts::prior_problem_source(cfg.prior);
      }
      ts::meta_train(cfg.resolved_model(), cfg.train, source, out_path, nullptr,
                     &std::cerr);
      std::cout << "training complete; final checkpoint at " << out_path
                << "/model_final.ckpt\n";
      return 0;
    }

    if (eval->parsed()) {
      ts::RunConfig cfg = load_config_or_default(config_path);
      if (show) {
        std::cout << ts::show_config(cfg);
        return 0;
      }
      const auto ds = ts::read_dataset(dataset_path);

      EvalJob job;
      job.method = method;
      job.iterations = iterations_override > 0 ? iterations_override : cfg.eval.iterations;
      job.init_context =
          init_context_override >= 0 ? init_context_override : cfg.eval.init_context;
      job.seed = seed;
      job.alpha = ds.header.alpha;
      job.greedy = greedy || cfg.eval.greedy;
      job.context_cap = cfg.eval.context_cap;

      std::unique_ptr<ts::Pftsn> model;
      if (method == "pftsn") {
        if (model_path.empty())
          throw std::invalid_argument("evaluate: --model is required for method pftsn");
        model = std::make_unique<ts::Pftsn>(ts::load_checkpoint(model_path));
        const auto& mc = model->config();
        if (mc.num_tasks != ds.header.prior.num_tasks ||
            mc.seq_len != ds.header.prior.sequence_length)
          throw std::runtime_error(
              "evaluate: checkpoint architecture (N=" + std::to_string(mc.num_tasks) +
              ", L=" + std::to_string(mc.seq_len) + ") does not match the dataset");
        job.model = model.get();
        job.temperature = temperature_override > 0.0 ? temperature_override
                          : cfg.eval.temperature > 0.0 ? cfg.eval.temperature
                                                       : mc.temperature;
      }

      const auto traces = evaluate_suite(job, ds.problems, workers);

      ts::TraceFileHeader th;
      th.method = method;
      th.iterations = job.iterations;
      th.init_context = job.init_context;
      th.seed = seed;
      th.num_tasks = ds.header.prior.num_tasks;
      th.sequence_length = ds.header.prior.sequence_length;
      th.alpha = job.alpha;
      th.problems = dataset_path;
      ts::write_traces(th, traces, out_path);
      std::cout << "wrote " << traces.size() << " traces to " << out_path << "\n";
      return 0;
    }

    if (report->parsed()) {
      std::vector<ts::TraceFileHeader> headers;
      std::vector<std::vector<ts::Trace>> by_method;
      for (const auto& p : trace_paths) {
        auto [h, traces] = ts::read_traces(p);
        headers.push_back(std::move(h));
        by_method.push_back(std::move(traces));
      }

      std::string curves = "method,iteration,mean_best_u_bar,std_best_u_bar,n\n";
      for (std::size_t m = 0; m < by_method.size(); ++m) {
        for (const auto& pt : ts::curve_export(by_method[m])) {
          char buf[160];
          std::snprintf(buf, sizeof(buf), "%s,%d,%.9g,%.9g,%zu\n",
                        headers[m].method.c_str(), pt.iteration, pt.mean, pt.stddev,
                        pt.count);
          curves += buf;
        }
      }
      write_csv(out_prefix + "_curves.csv", curves);

      std::string timing =
          "method,mean_proposal_seconds,total_proposal_seconds,"
          "mean_iterations_to_best,mean_seconds_to_best\n";
      for (std::size_t m = 0; m < by_method.size(); ++m) {
        double total = 0.0;
        std::size_t count = 0;
        for (const auto& t : by_method[m])
          for (const auto& s : t.steps) {
            total += s.proposal_seconds;
            ++count;
          }
        const auto [iters, secs] = convergence_stats(by_method[m]);
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%.9g\n",
                      headers[m].method.c_str(),
                      count ? total / static_cast<double>(count) : 0.0, total, iters,
                      secs);
        timing += buf;
      }
      write_csv(out_prefix + "_timing.csv", timing);

      if (by_method.size() < 2) {
        std::cerr << "single trace input: rank and break-even tables skipped\n";
        std::cout << "report written with prefix " << out_prefix << "\n";
        return 0;
      }

      const auto table = ts::aggregate_ranks(by_method);
      std::string ranks = "checkpoint_pct,iteration,method,mean_rank\n";
      std::string details = "checkpoint_pct,iteration,problem_id,method,rank\n";
      for (std::size_t c = 0; c < table.checkpoint_fractions.size(); ++c) {
        const int pct = static_cast<int>(std::lround(table.checkpoint_fractions[c] * 100));
        for (std::size_t m = 0; m < table.methods.size(); ++m) {
          char buf[160];
          std::snprintf(buf, sizeof(buf), "%d,%d,%s,%.9g\n", pct,
                        table.checkpoint_iterations[c], table.methods[m].c_str(),
                        table.mean_ranks[c][m]);
          ranks += buf;
        }
        for (std::size_t p = 0; p < table.problem_ids.size(); ++p)
          for (std::size_t m = 0; m < table.methods.size(); ++m) {
            char buf[200];
            std::snprintf(buf, sizeof(buf), "%d,%d,%s,%s,%.9g\n", pct,
                          table.checkpoint_iterations[c], table.problem_ids[p].c_str(),
                          table.methods[m].c_str(), table.ranks[c][p][m]);
            details += buf;
          }
      }
      write_csv(out_prefix + "_ranks.csv", ranks);
      write_csv(out_prefix + "_rank_details.csv", details);

      std::string breakeven =
          "method_a,method_b,iters_a,secs_a,iters_b,secs_b,break_even_seconds\n";
      std::vector<std::pair<double, double>> conv;
      conv.reserve(by_method.size());
      for (const auto& traces : by_method) conv.push_back(convergence_stats(traces));
      for (std::size_t a = 0; a < by_method.size(); ++a)
        for (std::size_t b = a + 1; b < by_method.size(); ++b) {
          const auto [na, ta] = conv[a];
          const auto [nb, tb] = conv[b];
          char buf[240];
          if (na == nb) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g,%.9g,%.9g,undefined\n",
                          headers[a].method.c_str(), headers[b].method.c_str(), na, ta,
                          nb, tb);
          } else {
            std::snprintf(buf, sizeof(buf), "%s,%s,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                          headers[a].method.c_str(), headers[b].method.c_str(), na, ta,
                          nb, tb, ts::break_even(na, ta, nb, tb));
          }
          breakeven += buf;
        }
      write_csv(out_prefix + "_breakeven.csv", breakeven);
      std::cout << "report written with prefix " << out_prefix << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
