// tmc: compile automata into transformers, convert, run, validate, probe.
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tmc/compilers.hpp"
#include "tmc/generation.hpp"
#include "tmc/harness.hpp"
#include "tmc/model_io.hpp"
#include "tmc/softmaxify.hpp"

namespace {

using namespace tmc;

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error("usage: " + m) {}
};

std::string report_path(const std::string& out, const std::string& given) {
  if (!given.empty()) return given;
  auto dot = out.rfind(".json");
  return (dot != std::string::npos && dot + 5 == out.size() ? out.substr(0, dot) : out) + ".report.json";
}

void need_even_r(int r, int min_r) {
  if (r % 2) throw UsageError("r must be even");
  if (r < min_r) throw UsageError("r must be >= " + std::to_string(min_r));
  if (r > 30) throw UsageError("r must be <= 30");
}

std::vector<std::string> parse_word(const std::string& s) {
  if (s.empty()) return {};
  std::vector<std::string> w;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      w.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  w.push_back(cur);
  return w;
}

std::string join_word(const std::vector<std::string>& w) {
  std::string s;
  for (size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + w[i];
  return s;
}

Precision precision_flag(const std::string& s, const char* flag) {
  try {
    return parse_precision(s);
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string(flag) + ": " + e.what());
  }
}

void print_dims(const char* what, const Dims& z) {
  std::cout << what << ": L=" << z.L << " H=" << z.H << " d=" << z.d << " d_k=" << z.d_k << " d_v=" << z.d_v
            << " d_ff=" << z.d_ff << "\n";
}

void write_compiled(const TransformerParams& p, const CompileReport& rep, const std::string& out, const std::string& rep_out) {
  save_model(out, p);
  write_json_file(report_path(out, rep_out), report_to_json(rep));
  print_dims("dims", p.dims);
  print_dims("formula", rep.formula);
  for (const auto& n : rep.notes) std::cout << "note: " << n << "\n";
  std::cout << "wrote " << out << " and " << report_path(out, rep_out) << "\n";
}

void print_validation(const ValidationReport& r) {
  std::cout << r.kind << ": attempted " << r.attempted << ", skipped " << r.skipped << ", checked " << r.checked
            << ", mismatches " << r.mismatches.size() << ", invariant violations " << r.invariants.violations()
            << ", length-bound violations " << r.length_bound_violations << ", " << r.wall_seconds << " s\n";
  if (r.c != 1) std::cout << "c = " << r.c << ", max pre-denoising deviation " << r.max_denoise_deviation << "\n";
  for (size_t i = 0; i < r.mismatches.size() && i < 5; ++i) {
    const auto& m = r.mismatches[i];
    std::cout << "  trial " << m.trial << " segment " << m.segment << " index " << m.index << ": expected " << m.expected
              << ", got " << m.actual << "\n";
  }
  if (!r.invariants.first.empty()) std::cout << "  first invariant violation: " << r.invariants.first << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compile automata into transformers and check them"};
  app.require_subcommand(1);

  // compile-*
  std::string machine_path, out, rep_out;
  int r = 0;
  auto* c_dfa = app.add_subcommand("compile-dfa", "compile a DFA into a hardmax transformer");
  auto* c_cot = app.add_subcommand("compile-cot", "compile a Turing machine for CoT generation");
  auto* c_scot = app.add_subcommand("compile-scot", "compile a Turing machine for SCoT generation");
  c_dfa->add_option("--dfa", machine_path, "DFA spec (JSON)")->required();
  for (auto* sc : {c_cot, c_scot}) sc->add_option("--tm", machine_path, "Turing machine spec (JSON)")->required();
  for (auto* sc : {c_dfa, c_cot, c_scot}) {
    sc->add_option("--r", r, "positional bits")->required();
    sc->add_option("--out", out, "model file")->required();
    sc->add_option("--report", rep_out, "compile report file (default: <out> with .json replaced by .report.json)");
  }

  // convert
  std::string model_path, mode = "scaled", c_text = "auto";
  long long N = 0;
  int att_mantissa = 4;
  auto* conv = app.add_subcommand("convert", "turn a hardmax model into a softmax model");
  conv->add_option("--model", model_path, "hardmax model file")->required();
  conv->add_option("--mode", mode, "scaled | denoised")->check(CLI::IsMember({"scaled", "denoised"}));
  conv->add_option("--c", c_text, "query/key scale, or 'auto' for the next power of two above the bound");
  conv->add_option("--N", N, "context length bound (default 2^r)");
  conv->add_option("--att-mantissa", att_mantissa, "attention mantissa bits, for the suggested format");
  conv->add_option("--out", out, "converted model file")->required();

  // run-*
  std::string input, act_fmt = "exact", att_fmt = "exact", attention, trace_path;
  long long budget = -1;
  auto* run_c = app.add_subcommand("run-cot", "generate with the CoT protocol");
  auto* run_s = app.add_subcommand("run-scot", "generate with the SCoT protocol");
  for (auto* sc : {run_c, run_s}) {
    sc->add_option("--model", model_path, "model file")->required();
    sc->add_option("--input", input, "input word, comma-separated symbols");
    sc->add_option("--act-format", act_fmt, "activation rounding: exact|bf16|fp16|fp32|fp64|custom:bm,be");
    sc->add_option("--att-format", att_fmt, "attention-weight rounding (softmax only)");
    sc->add_option("--attention", attention, "hardmax | softmax (default from the model)")
        ->check(CLI::IsMember({"hardmax", "softmax"}));
    sc->add_option("--budget", budget, "max generated tokens (default 2^r + 16 per segment)");
    sc->add_option("--trace", trace_path, "JSON-lines trace output");
  }

  // validate
  std::string kind = "cot";
  std::vector<std::string> dfa_paths;
  ValidationConfig vc;
  int max_len = 7, v_r = 3;
  auto* val = app.add_subcommand("validate", "randomized or exhaustive validation against the oracles");
  val->add_option("--kind", kind, "cot | scot | dfa | softmax-scaled | softmax-denoised | rope")
      ->check(CLI::IsMember({"cot", "scot", "dfa", "softmax-scaled", "softmax-denoised", "rope"}));
  val->add_option("--trials", vc.trials, "number of sampled trials");
  val->add_option("--seed", vc.seed, "seed");
  val->add_option("--step-cap", vc.step_cap, "machine step cap");
  val->add_option("--max-w", vc.max_w, "max input length");
  val->add_option("--tapes", vc.k_max, "max tapes");
  val->add_option("--max-states", vc.q_max, "max |Q|");
  val->add_option("--max-gamma", vc.g_max, "max |Gamma|");
  val->add_option("--att-mantissa", vc.att_mantissa, "attention mantissa bits (softmax-denoised)");
  val->add_flag("--scot", "softmax kinds: use the SCoT construction");
  auto* dfa_opt = val->add_option("--dfa", dfa_paths, "DFA spec files (dfa kind; default: built-in examples)");
  auto* r_opt = val->add_option("--r", v_r, "positional bits (dfa, rope)");
  auto* len_opt = val->add_option("--max-len", max_len, "max word length (dfa)");
  val->add_option("--out", out, "report file");

  // probe-phi
  std::string format = "bf16";
  long long max_i = 10000;
  auto* probe = app.add_subcommand("probe-phi", "first index where rounded symbol vectors get confused");
  probe->add_option("--format", format, "bf16|fp16|fp32|fp64|custom:bm,be");
  probe->add_option("--max", max_i, "scan i = 1..max");
  probe->add_option("--out", out, "report file");

  // c0
  std::string c0_mode = "exact";
  double d = 0, d_ff = 0, d_k = 0, Lc = 0, Nc = 0;
  auto* c0 = app.add_subcommand("c0", "scale constants for softmax conversion");
  c0->add_option("--mode", c0_mode, "exact | denoising")->check(CLI::IsMember({"exact", "denoising"}));
  c0->add_option("--d", d, "model width");
  c0->add_option("--d-ff", d_ff, "MLP width");
  c0->add_option("--d-k", d_k, "key width")->required();
  c0->add_option("--L", Lc, "depth");
  c0->add_option("--N", Nc, "context length")->required();

  // capacity
  long long bL = 0, bdk = 0, bd = 0, bdff = 0;
  std::string construction = "cot";
  auto* cap = app.add_subcommand("capacity", "largest r and machines a model shape can host");
  cap->add_option("--L", bL, "depth budget")->required();
  cap->add_option("--d-k", bdk, "key width budget")->required();
  cap->add_option("--d", bd, "width budget")->required();
  cap->add_option("--d-ff", bdff, "MLP width budget")->required();
  cap->add_option("--construction", construction, "cot | scot")->check(CLI::IsMember({"cot", "scot"}));
  cap->add_option("--out", out, "report file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (c_dfa->parsed()) {
      if (r < 1 || r > 30) throw UsageError("r must be in [1, 30]");
      auto m = load_dfa(machine_path);
      auto c = compile_dfa(m, r);
      write_compiled(c.params, c.report, out, rep_out);
      return 0;
    }
    if (c_cot->parsed() || c_scot->parsed()) {
      const bool scot = c_scot->parsed();
      need_even_r(r, scot ? 4 : 2);
      auto m = load_tm(machine_path);
      auto c = scot ? compile_scot(m, r) : compile_cot(m, r);
      write_compiled(c.params, c.report, out, rep_out);
      return 0;
    }
    if (conv->parsed()) {
      auto p = load_model(model_path);
      if (p.mode != "hardmax") throw UsageError("model is already converted (mode " + p.mode + ")");
      if (N <= 0) N = p.pos.kind != PosKind::None ? (1LL << p.pos.r) : throw UsageError("--N is required without positions");
      const auto& z = p.dims;
      double c;
      if (c_text == "auto") {
        c = mode == "scaled" ? next_pow2(c0_exact_attention(z.d, z.d_ff, z.d_k, z.L, (double)N))
                             : next_pow2(c0_denoising(z.d_k, (double)N));
      } else {
        try {
          size_t used = 0;
          c = std::stod(c_text, &used);
          if (used != c_text.size()) throw std::invalid_argument("");
        } catch (...) {
          throw UsageError("--c must be a number or 'auto'");
        }
        if (!(c > 0)) throw UsageError("--c must be positive");
      }
      auto q = mode == "scaled" ? scale_qk(p, c) : convert_with_denoising(p, c);
      save_model(out, q);
      std::cout << "c = " << c << "\n";
      print_dims("dims", q.dims);
      if (mode == "scaled") {
        std::cout << "run with: --attention softmax --act-format bf16\n";
      } else {
        auto act = format_containing(c, 1, 3);
        std::cout << "run with: --attention softmax --act-format " << to_string(act) << " --att-format custom:"
                  << att_mantissa << "," << min_att_exponent_bits(N) << "\n";
      }
      std::cout << "wrote " << out << "\n";
      return 0;
    }
    if (run_c->parsed() || run_s->parsed()) {
      const bool scot = run_s->parsed();
      auto p = load_model(model_path);
      EvalConfig cfg;
      cfg.act = precision_flag(act_fmt, "--act-format");
      cfg.att = precision_flag(att_fmt, "--att-format");
      const bool soft = attention.empty() ? p.mode != "hardmax" : attention == "softmax";
      cfg.attention = soft ? AttnKind::Softmax : AttnKind::Hardmax;
      if (!soft && !cfg.att.exact()) throw UsageError("--att-format applies to softmax attention only");
      const long long seg_budget = p.pos.kind == PosKind::BinaryAbsolute ? (1LL << p.pos.r) + 16 : 1 << 20;
      if (budget < 0) budget = scot ? 64 * seg_budget : seg_budget;
      auto w = parse_word(input);
      GenerationTrace tr;
      try {
        tr = scot ? run_scot(p, w, cfg, budget) : run_cot(p, w, cfg, budget);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      if (!trace_path.empty()) {
        std::ofstream os(trace_path);
        if (!os) throw FileError("cannot write " + trace_path);
        write_trace_jsonl(os, p, tr);
      }
      std::cout << "outcome: " << outcome_name(tr.outcome);
      if (tr.outcome == Outcome::Output) std::cout << " [" << join_word(tr.output) << "]";
      if (!tr.reason.empty()) std::cout << " (" << tr.reason << ")";
      std::cout << "\nsegments: " << tr.segments.size() << ", total tokens " << tr.total_tokens() << ", longest segment "
                << tr.max_segment() << "\n";
      for (size_t i = 0; i < tr.diagnostics.size() && i < 5; ++i) std::cout << "diagnostic: " << tr.diagnostics[i] << "\n";
      return tr.outcome == Outcome::Output ? 0 : 1;
    }
    if (val->parsed()) {
      if (kind != "dfa" && (dfa_opt->count() || len_opt->count())) throw UsageError("--dfa and --max-len apply to --kind dfa");
      if (kind != "dfa" && kind != "rope" && r_opt->count()) throw UsageError("--r applies to --kind dfa or rope");
      if (vc.trials < 1) throw UsageError("--trials must be >= 1");
      if (vc.q_max < vc.q_min || vc.g_max < vc.g_min || vc.k_max < vc.k_min || vc.max_w < 0 || vc.step_cap < 1)
        throw UsageError("machine-size ranges are empty");
      if (kind == "rope") {
        if (v_r < 1 || v_r > 16) throw UsageError("r must be in [1, 16]");
        auto rr = validate_rope(v_r);
        std::cout << "rope r=" << v_r << ": wrong bits " << rr.wrong_bits << " over " << rr.positions
                  << " positions, min separation " << rr.min_separation << " (bound " << rr.bound << ")\n";
        if (!out.empty()) write_json_file(out, report_to_json(rr));
        return rr.ok() ? 0 : 1;
      }
      ValidationReport rep;
      if (kind == "dfa") {
        if (v_r < 1 || v_r > 20) throw UsageError("r must be in [1, 20]");
        if (max_len < 0 || max_len >= (1 << v_r)) throw UsageError("--max-len must be in [0, 2^r - 1]");
        std::vector<Dfa> dfas;
        for (const auto& pth : dfa_paths) dfas.push_back(load_dfa(pth));
        if (dfas.empty()) dfas = example_dfas();
        rep = validate_dfa(dfas, v_r, max_len);
      } else if (kind == "cot") {
        rep = validate_cot(vc);
      } else if (kind == "scot") {
        rep = validate_scot(vc);
      } else {
        rep = validate_softmax(kind == "softmax-scaled" ? AttnMode::Scaled : AttnMode::Denoised, vc, val->count("--scot") > 0);
      }
      print_validation(rep);
      if (!out.empty()) write_json_file(out, report_to_json(rep));
      return rep.ok() ? 0 : 1;
    }
    if (probe->parsed()) {
      auto fmt = precision_flag(format, "--format");
      if (max_i < 2) throw UsageError("--max must be >= 2");
      auto pr = probe_phi(fmt, max_i);
      if (pr.found) std::cout << pr.format << ": i*=" << pr.i_star << " (confused with j*=" << pr.j_star << ")\n";
      else std::cout << pr.format << ": no confusion up to " << pr.scanned << "\n";
      if (!out.empty()) write_json_file(out, report_to_json(pr));
      return 0;
    }
    if (c0->parsed()) {
      if (c0_mode == "exact" && (d < 1 || d_ff < 1 || Lc < 1)) throw UsageError("exact mode needs --d, --d-ff and --L");
      double v = c0_mode == "exact" ? c0_exact_attention(d, d_ff, d_k, Lc, Nc) : c0_denoising(d_k, Nc);
      std::cout << "c0 = " << v << "\nnext power of two: " << next_pow2(v) << "\n";
      return 0;
    }
    if (cap->parsed()) {
      auto t = instantiate_capacity(bL, bdk, bd, bdff, construction == "scot");
      std::cout << "r (depth) = " << t.r_depth << ", r (key width) = " << t.r_dk << ", r = " << t.r
                << ", context 2^r = " << (double)t.context << "\n";
      for (const auto& row : t.rows)
        if (row.max_q >= 2) std::cout << "  K=" << row.K << " |Gamma|=" << row.gamma << ": |Q| <= " << row.max_q << "\n";
      if (!out.empty()) write_json_file(out, report_to_json(t));
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const FileError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
