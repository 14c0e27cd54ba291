// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are pinned here, not configurable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dexlet/autodiff.hpp"
#include "dexlet/errors.hpp"
#include "dexlet/eval.hpp"
#include "dexlet/index_set.hpp"
#include "dexlet/parser.hpp"
#include "dexlet/printer.hpp"
#include "dexlet/simplify.hpp"
#include "dexlet/typecheck.hpp"

using namespace dexlet;
namespace fs = std::filesystem;

namespace {

constexpr double kFdStep = 1e-4;       // central-difference step
constexpr double kFdTol = 1e-4;        // gradient vs finite differences
constexpr double kEvalTol = 1e-12;     // simplification / parallel agreement
constexpr double kAdjointTol = 1e-6;   // dot-product identity
constexpr int kRandomPrograms = 200;
constexpr long long kWorkFactor = 4;

int failures = 0;

void report(int num, const char* desc, bool ok, const std::string& detail) {
  std::printf("%s criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", num, desc,
              detail.c_str());
  if (!ok) ++failures;
}

std::string dir() { return DEXLET_TEST_DIR; }

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

ExprPtr compile(const std::string& src) {
  NameSupply::reset();
  ElabProgram p = parseProgram(src, "t.dexlet");
  TypeEnv env;
  checkExpr(Capability::pure(), env, p.whole());
  return p.whole();
}

RtPtr runDirect(const std::string& src, const EvalOptions& opts = {},
                EvalCounters* c = nullptr) {
  return evalExpr(nullptr, compile(src), opts, c);
}

RtPtr runSimpl(const std::string& src, const EvalOptions& opts = {},
               EvalCounters* c = nullptr) {
  return evalExpr(nullptr, optimize(simplifyExpr(compile(src))), opts, c);
}

double scalar(const RtPtr& v) { return asRt<RScalar>(v)->v; }

std::vector<double> floats(const RtPtr& v) {
  std::vector<double> out;
  for (const auto& e : asRt<RTable>(v)->elems) out.push_back(scalar(e));
  return out;
}

std::string lit(double x) {
  std::ostringstream t;
  t.precision(17);
  t << x;
  std::string s = t.str();
  if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) {
    s += ".0";
  }
  return s;
}

std::string vecLit(const std::vector<double>& v) {
  std::ostringstream o;
  o << "[";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) o << ", ";
    o << lit(v[i]);
  }
  o << "]";
  return o.str();
}

double msSince(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

// ---------------------------------------------------------------------------
// 1. Typing fixtures.

void criterion1() {
  auto t0 = std::chrono::steady_clock::now();
  int total = 0, illTyped = 0, wrong = 0;
  std::string firstWrong;
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir() + "/fixtures")) {
    if (e.path().extension() == ".dexlet") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& path : paths) {
    std::string src = slurp(path.string());
    if (src.rfind("-- expect:", 0) != 0) continue;
    std::istringstream head(src.substr(10, src.find('\n') - 10));
    std::string kind, code;
    head >> kind;
    if (kind == "error") head >> code;
    ++total;
    if (kind == "error") ++illTyped;
    std::string got = "ok";
    try {
      compile(src);
    } catch (const DexError& e) {
      got = errCodeName(e.code());
    }
    bool match = (kind == "ok") ? (got == "ok") : (got == code);
    if (!match) {
      ++wrong;
      if (firstWrong.empty()) {
        firstWrong = path.filename().string() + " got " + got;
      }
    }
  }
  double ms = msSince(t0);
  std::ostringstream d;
  d << total << " fixtures, " << illTyped << " ill-typed, " << wrong
    << " mismatched";
  if (!firstWrong.empty()) d << ": " << firstWrong;
  d << ", " << ms << " ms";
  report(1, "typing-rule fixture conformance",
         wrong == 0 && total >= 30 && illTyped >= 10 && ms < 1000, d.str());
}

// ---------------------------------------------------------------------------
// 2. Index-set bijection.

void criterion2() {
  auto t0 = std::chrono::steady_clock::now();
  std::vector<DescPtr> depth1 = {descUnit(), descFin(1), descFin(2), descFin(3),
                                 descFin(16)};
  std::vector<DescPtr> shapes = depth1;
  std::vector<DescPtr> prev = depth1;
  for (int depth = 2; depth <= 3; ++depth) {
    std::vector<DescPtr> next;
    for (const auto& l : prev) {
      for (const auto& r : depth1) {
        next.push_back(descPair(l, r));
        next.push_back(descEither(l, r));
      }
    }
    shapes.insert(shapes.end(), next.begin(), next.end());
    prev = std::move(next);
  }
  long long checked = 0;
  std::string bad;
  for (const auto& d : shapes) {
    long long n = size(d);
    for (long long i = 0; i < n; ++i) {
      ValuePtr m = fromOrdinal(i, d);
      if (ordinal(m, d) != i) { bad = "ordinal/fromOrdinal"; break; }
      ValuePtr rev = reverseIndex(m, d);
      if (ordinal(rev, d) != n - 1 - i) { bad = "reverse order"; break; }
      if (ordinal(reverseIndex(rev, d), d) != i) { bad = "involution"; break; }
      ++checked;
    }
    std::vector<ValuePtr> en = enumerate(d);
    if (static_cast<long long>(en.size()) != n) bad = "enumerate size";
    for (long long i = 0; i < n && bad.empty(); ++i) {
      if (ordinal(en[static_cast<size_t>(i)], d) != i) bad = "enumerate order";
    }
    bool threw = false;
    try {
      fromOrdinal(n, d);
    } catch (const DexError& e) {
      threw = e.code() == ErrCode::OutOfBounds;
    }
    if (!threw) bad = "missing bounds check";
    if (!bad.empty()) break;
  }
  double ms = msSince(t0);
  std::ostringstream det;
  det << shapes.size() << " shapes, " << checked << " members";
  if (!bad.empty()) det << ", failed: " << bad;
  det << ", " << ms << " ms";
  report(2, "index-set bijection and involution", bad.empty() && ms < 5000,
         det.str());
}

// ---------------------------------------------------------------------------
// 3. Simplification grammar and meaning preservation.

const char* kDataCorpus[] = {"matmul.dexlet",     "histogram.dexlet",
                             "sum.dexlet",        "sumsq.dexlet",
                             "dot.dexlet",        "revdot.dexlet",
                             "cumulative.dexlet", "fusion.dexlet",
                             "matmul_trace.dexlet", "mandelbrot.dexlet"};

void criterion3() {
  auto t0 = std::chrono::steady_clock::now();
  std::string bad;
  for (const char* name : kDataCorpus) {
    std::string src = slurp(dir() + "/fixtures/" + name);
    ExprPtr e = compile(src);
    RtPtr direct = evalExpr(nullptr, e);
    ExprPtr s = simplifyExpr(e);
    if (!isFirstOrder(s)) { bad = std::string(name) + " not first-order"; break; }
    if (rtMaxRelDiff(evalExpr(nullptr, s), direct) > kEvalTol) {
      bad = std::string(name) + " changed meaning";
      break;
    }
  }
  std::string golden = slurp(dir() + "/golden/table_of_functions.golden");
  std::string tof =
      "f1 = \\u:Float. u * 2.0\n"
      "f2 = \\u:Float. u + 10.0\n"
      "xs0 = [1.0, 2.0, 3.0]\n"
      "fs = for i.\n"
      "  y1 = f1 (xs0.i)\n"
      "  y2 = f2 y1\n"
      "  \\z:Float. (y1 + y2) + z\n"
      "fs\n";
  ExprPtr e = compile(tof);
  TypeEnv env;
  SimplResult r = simplify(env, e);
  if (bad.empty() &&
      printExpr(contextFill(r.ctx, eRet(r.residual))) + "\n" != golden) {
    bad = "table-of-functions golden mismatch";
  }
  double ms = msSince(t0);
  std::ostringstream det;
  det << sizeof(kDataCorpus) / sizeof(*kDataCorpus)
      << " corpus programs plus golden";
  if (!bad.empty()) det << ", failed: " << bad;
  det << ", " << ms << " ms";
  report(3, "simplified output is first-order and meaning-preserving",
         bad.empty() && ms < 5000, det.str());
}

// ---------------------------------------------------------------------------
// 4. Gradient vs central finite differences.

bool gradMatchesFd(const std::string& fnDef, const std::vector<double>& pt,
                   std::string& why) {
  std::vector<double> g;
  try {
    g = floats(runSimpl(fnDef + "g = grad f " + vecLit(pt) + "\ng\n"));
  } catch (const DexError& e) {
    why = e.what();
    return false;
  }
  for (size_t k = 0; k < pt.size(); ++k) {
    std::vector<double> hi = pt, lo = pt;
    hi[k] += kFdStep;
    lo[k] -= kFdStep;
    double fHi = scalar(runSimpl(fnDef + "y = f " + vecLit(hi) + "\ny\n"));
    double fLo = scalar(runSimpl(fnDef + "y = f " + vecLit(lo) + "\ny\n"));
    double fd = (fHi - fLo) / (2 * kFdStep);
    if (std::abs(g[k] - fd) > kFdTol * (1 + std::abs(fd))) {
      why = "component " + std::to_string(k);
      return false;
    }
  }
  return true;
}

void criterion4() {
  auto t0 = std::chrono::steady_clock::now();
  struct Case { const char* name; std::string fnDef; std::vector<double> pt; };
  std::vector<Case> cases = {
      {"sum", "f = \\xs:((Fin 3)=>Float). sum xs\n", {1, 2, 3}},
      {"sumsq", "f = \\xs:((Fin 3)=>Float). sum (for i. (xs.i) * (xs.i))\n",
       {1, 2, 3}},
      {"dot",
       "c = [0.5, 1.5, 2.5]\n"
       "f = \\xs:((Fin 3)=>Float). sum (for i. ((xs.i) * (c.i)) + (xs.i))\n",
       {1, 2, 3}},
      {"revdot",
       "f = \\xs:((Fin 4)=>Float). sum (for i. (xs.i) * (xs.(reverse i)))\n",
       {1, -2, 0.5, 3}},
      {"cumulative-state",
       "f = \\xs:((Fin 3)=>Float). yieldState 0.0 \\s.\n"
       "  for i. s := ((get s) * 2.0) + (xs.i)\n"
       "  ()\n",
       {1, 2, 3}},
      {"poly", "f = \\xs:((Fin 1)=>Float). ((xs.(@0 : Fin 1)) * (xs.(@0 : Fin 1)))"
               " * (xs.(@0 : Fin 1))\n", {1.7}},
      {"product",
       "f = \\xs:((Fin 2)=>Float). (xs.(@0 : Fin 2)) * (xs.(@1 : Fin 2))\n",
       {3, 5}},
      {"indexed-read", "f = \\xs:((Fin 4)=>Float). xs.(@2 : Fin 4)\n",
       {1, 2, 3, 4}},
      {"accum",
       "f = \\xs:((Fin 3)=>Float). yieldAccum \\h.\n"
       "  for i. h += (xs.i) * (xs.i)\n",
       {1, 2, 3}},
      {"scatter-slice",
       "idx : (Fin 4) => (Fin 2) = [@0, @1, @1, @0]\n"
       "f = \\xs:((Fin 4)=>Float). sum (yieldAccum \\h.\n"
       "  for i. h!(idx.i) += (xs.i) * (xs.i))\n",
       {1, 2, 3, 4}},
  };
  int ok = 0;
  std::string bad;
  for (const auto& c : cases) {
    std::string why;
    if (gradMatchesFd(c.fnDef, c.pt, why)) {
      ++ok;
    } else if (bad.empty()) {
      bad = std::string(c.name) + ": " + why;
    }
  }
  // Matrix-valued point: d/dA tr(A B) = B^T, checked against FD per entry.
  const std::string fnDef =
      "b = [[5.0, 6.0], [7.0, 8.0]]\n"
      "f = \\a:((Fin 2)=>((Fin 2)=>Float)).\n"
      "  m = for i k. sum (for j. (a.i.j) * (b.j.k))\n"
      "  sum (for i. m.i.i)\n";
  double pt[2][2] = {{1, 2}, {3, 4}};
  auto mat = [&](double m[2][2]) {
    return "[[" + lit(m[0][0]) + ", " + lit(m[0][1]) + "], [" + lit(m[1][0]) +
           ", " + lit(m[1][1]) + "]]";
  };
  bool traceOk = true;
  RtPtr g = runSimpl(fnDef + "g = grad f " + mat(pt) + "\ng\n");
  for (int r = 0; r < 2; ++r) {
    std::vector<double> row = floats(asRt<RTable>(g)->elems[static_cast<size_t>(r)]);
    for (int c = 0; c < 2; ++c) {
      double hi[2][2], lo[2][2];
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) { hi[i][j] = pt[i][j]; lo[i][j] = pt[i][j]; }
      }
      hi[r][c] += kFdStep;
      lo[r][c] -= kFdStep;
      double fd = (scalar(runSimpl(fnDef + "y = f " + mat(hi) + "\ny\n")) -
                   scalar(runSimpl(fnDef + "y = f " + mat(lo) + "\ny\n"))) /
                  (2 * kFdStep);
      if (std::abs(row[static_cast<size_t>(c)] - fd) > kFdTol * (1 + std::abs(fd))) {
        traceOk = false;
      }
    }
  }
  if (traceOk) ++ok;
  else if (bad.empty()) bad = "matmul-trace";
  double ms = msSince(t0);
  std::ostringstream det;
  det << ok << "/" << cases.size() + 1 << " programs";
  if (!bad.empty()) det << ", failed: " << bad;
  det << ", " << ms << " ms";
  report(4, "gradients match central finite differences",
         bad.empty() && ok >= 10 && ms < 10000, det.str());
}

// ---------------------------------------------------------------------------
// 5. Adjoint identity on random linear programs.

void criterion5() {
  auto t0 = std::chrono::steady_clock::now();
  unsigned seed = 12345;
  if (const char* s = std::getenv("DEXLET_SEED")) {
    seed = static_cast<unsigned>(std::strtoul(s, nullptr, 10));
  }
  std::mt19937 rng(seed);
  auto uni = [&](double a, double b) {
    return std::uniform_real_distribution<double>(a, b)(rng);
  };
  int ok = 0;
  std::string bad;
  for (int t = 0; t < kRandomPrograms; ++t) {
    int n = 1 + static_cast<int>(rng() % 8);
    std::string N = std::to_string(n);
    int stages = 1 + static_cast<int>(rng() % 3);
    bool toScalar = rng() % 2 == 0;
    std::ostringstream def;
    std::string cur = "x";
    for (int s = 0; s < stages; ++s) {
      std::string next = "t" + std::to_string(s);
      switch (rng() % 3) {
        case 0: {  // elementwise scale by a fresh constant table
          std::vector<double> c;
          for (int i = 0; i < n; ++i) c.push_back(uni(-2, 2));
          def << "  c" << s << " = " << vecLit(c) << "\n";
          def << "  " << next << " = for i : Fin " << N << ". (" << cur
              << ".i) * (c" << s << ".i)\n";
          break;
        }
        case 1:  // index reversal
          def << "  " << next << " = for i : Fin " << N << ". " << cur
              << ".(reverse i)\n";
          break;
        default:  // sum with the reversed vector
          def << "  " << next << " = for i : Fin " << N << ". (" << cur
              << ".i) + (" << cur << ".(reverse i))\n";
      }
      cur = next;
    }
    std::string fnDef = "f = \\x:((Fin " + N + ")=>Float).\n" + def.str() +
                        (toScalar ? "  sum " + cur + "\n" : "  " + cur + "\n");
    std::vector<double> x, y;
    for (int i = 0; i < n; ++i) x.push_back(uni(-3, 3));
    int m = toScalar ? 1 : n;
    for (int i = 0; i < m; ++i) y.push_back(uni(-3, 3));
    try {
      RtPtr fx = runSimpl(fnDef + "y = f " + vecLit(x) + "\ny\n");
      std::string ct = toScalar ? lit(y[0]) : vecLit(y);
      RtPtr fty = runSimpl(fnDef + "t = transpose f " + ct + "\nt\n");
      double lhs = 0;
      if (toScalar) {
        lhs = scalar(fx) * y[0];
      } else {
        std::vector<double> fv = floats(fx);
        for (int i = 0; i < n; ++i) lhs += fv[static_cast<size_t>(i)] * y[static_cast<size_t>(i)];
      }
      double rhs = 0;
      std::vector<double> tv = floats(fty);
      for (int i = 0; i < n; ++i) rhs += x[static_cast<size_t>(i)] * tv[static_cast<size_t>(i)];
      if (std::abs(lhs - rhs) <= kAdjointTol * (1 + std::abs(lhs))) {
        ++ok;
      } else if (bad.empty()) {
        bad = "program " + std::to_string(t) + " lhs " + std::to_string(lhs) +
              " rhs " + std::to_string(rhs);
      }
    } catch (const DexError& e) {
      if (bad.empty()) bad = "program " + std::to_string(t) + ": " + e.what();
    }
  }
  double ms = msSince(t0);
  std::ostringstream det;
  det << ok << "/" << kRandomPrograms << " random linear programs, seed "
      << seed;
  if (!bad.empty()) det << ", failed: " << bad;
  det << ", " << ms << " ms";
  report(5, "adjoint dot-product identity", ok == kRandomPrograms && ms < 30000,
         det.str());
}

// ---------------------------------------------------------------------------
// 6. Work preservation.

void criterion6() {
  auto t0 = std::chrono::steady_clock::now();
  std::string bad;
  auto vec = [](int n, int mod) {
    std::vector<double> v;
    for (int i = 0; i < n; ++i) v.push_back((i % mod) + 1);
    return v;
  };
  {
    // Tangent work of a nonlinear program.
    int n = 64;
    std::string fnDef =
        "f = \\xs:((Fin 64)=>Float). sum (for i. (xs.i) * (xs.i))\n";
    std::string pt = vecLit(vec(n, 7));
    EvalCounters primal, tangent;
    runSimpl(fnDef + "y = f " + pt + "\ny\n", {}, &primal);
    runSimpl(fnDef + "p = linearize f " + pt + "\ndf = snd p\ndy = df " +
                 vecLit(vec(n, 3)) + "\ndy\n",
             {}, &tangent);
    if (tangent.arithmeticOps > kWorkFactor * primal.arithmeticOps ||
        tangent.accumUpdates > kWorkFactor * primal.accumUpdates) {
      bad = "sumsq tangent exceeds 4x";
    }
  }
  {
    // Transposed work of a linear program.
    int n = 64;
    std::string fnDef = "c = " + vecLit(vec(n, 5)) +
                        "\nf = \\xs:((Fin 64)=>Float). for i : Fin 64. (xs.i) * (c.i)\n";
    EvalCounters primal, trans;
    runSimpl(fnDef + "y = f " + vecLit(vec(n, 7)) + "\ny\n", {}, &primal);
    runSimpl(fnDef + "t = transpose f " + vecLit(vec(n, 3)) + "\nt\n", {},
             &trans);
    long long budget = kWorkFactor * (primal.arithmeticOps + primal.accumUpdates);
    if (bad.empty() && (trans.arithmeticOps > budget || trans.accumUpdates > budget)) {
      bad = "scale transpose exceeds 4x";
    }
  }
  {
    // Indexed-scatter transpose: one accumulator update per input element
    // plus a constant, independent of the target size k.
    long long overhead = -1;
    for (int n : {16, 64}) {
      for (int k : {4, 8}) {
        std::ostringstream idx;
        idx << "[";
        for (int i = 0; i < n; ++i) {
          if (i) idx << ", ";
          idx << "@" << (i * 3) % k;
        }
        idx << "]";
        std::string N = std::to_string(n), K = std::to_string(k);
        std::string fnDef = "idx : (Fin " + N + ") => (Fin " + K + ") = " +
                            idx.str() + "\nf = \\x:((Fin " + N +
                            ")=>Float). yieldAccum \\h.\n  for i. h!(idx.i) += x.i\n";
        EvalCounters c;
        runSimpl(fnDef + "t = transpose f " + vecLit(vec(k, 3)) + "\nt\n", {},
                 &c);
        long long extra = c.accumUpdates - n;
        if (overhead < 0) overhead = extra;
        if (bad.empty() && (extra != overhead || extra < 0 || extra > 4)) {
          bad = "scatter transpose did " + std::to_string(c.accumUpdates) +
                " updates for n=" + N + " k=" + K;
        }
      }
    }
  }
  double ms = msSince(t0);
  std::ostringstream det;
  det << "tangent and transpose within " << kWorkFactor
      << "x, scatter updates linear in n";
  if (!bad.empty()) det << ", failed: " << bad;
  det << ", " << ms << " ms";
  report(6, "differentiation preserves work", bad.empty(), det.str());
}

// ---------------------------------------------------------------------------
// 7. Histogram work efficiency.

void criterion7() {
  auto t0 = std::chrono::steady_clock::now();
  std::string bad;
  for (auto [n, k] : std::vector<std::pair<int, int>>{{5, 3}, {64, 7}, {100, 10}}) {
    std::ostringstream src;
    src << "points : (Fin " << n << ") => (Fin " << k << ") = [";
    for (int i = 0; i < n; ++i) {
      if (i) src << ", ";
      src << "@" << i % k;
    }
    src << "]\nhist = yieldAccum \\h.\n  for i. h!(points.i) += 1.0\nhist\n";
    EvalCounters c;
    RtPtr r = runSimpl(src.str(), {}, &c);
    if (c.accumUpdates != n) {
      bad = "n=" + std::to_string(n) + " did " + std::to_string(c.accumUpdates) +
            " updates";
      break;
    }
    std::vector<double> hist = floats(r);
    for (int b = 0; b < k; ++b) {
      int expect = n / k + (b < n % k ? 1 : 0);
      if (hist[static_cast<size_t>(b)] != expect) bad = "wrong counts";
    }
  }
  double ms = msSince(t0);
  std::ostringstream det;
  det << "(n,k) in {(5,3),(64,7),(100,10)}";
  if (!bad.empty()) det << ", failed: " << bad;
  det << ", " << ms << " ms";
  report(7, "histogram does exactly n accumulator updates", bad.empty(),
         det.str());
}

// ---------------------------------------------------------------------------
// 8. Parallel determinism.

void criterion8() {
  auto t0 = std::chrono::steady_clock::now();
  std::string bad;
  const char* corpus[] = {"histogram.dexlet", "sum.dexlet", "fusion.dexlet",
                          "matmul.dexlet"};
  for (const char* name : corpus) {
    std::string src = slurp(dir() + "/fixtures/" + name);
    RtPtr seq = runSimpl(src);
    for (int chunks : {1, 2, 3, 7}) {
      EvalOptions opts;
      opts.chunks = chunks;
      if (rtMaxRelDiff(runSimpl(src, opts), seq) > kEvalTol) {
        bad = std::string(name) + " chunks=" + std::to_string(chunks);
      }
    }
  }
  // A loop reading outer state is rejected before execution.
  NameSupply::reset();
  Name i = NameSupply::fresh("i"), r = NameSupply::fresh("r");
  ExprPtr loop = eFor(i, vFin(vInt(4)), eGet(vVar(r)));
  auto cell = std::make_shared<Cell>();
  cell->value = mkRt(RScalar{1.0});
  EnvPtr env = envBind(nullptr, r, mkRt(RRefVal{cell, {}}));
  bool rejected = false;
  try {
    evalParallelFor(env, loop, 2);
  } catch (const DexError& e) {
    rejected = e.code() == ErrCode::StateInParallel;
  }
  if (!rejected) bad = "stateful loop not rejected";
  double ms = msSince(t0);
  std::ostringstream det;
  det << "chunks {1,2,3,7} on 4 corpus loops, static state rejection";
  if (!bad.empty()) det << ", failed: " << bad;
  det << ", " << ms << " ms";
  report(8, "parallel chunking is deterministic", bad.empty(), det.str());
}

// ---------------------------------------------------------------------------
// 9. Fusion.

void criterion9() {
  auto t0 = std::chrono::steady_clock::now();
  std::string bad;
  std::string src = slurp(dir() + "/fixtures/fusion.dexlet");
  ExprPtr e = compile(src);
  RtPtr direct = evalExpr(nullptr, e);
  ExprPtr s = simplifyExpr(e);
  ExprPtr o = optimize(s);
  if (printExpr(o) + "\n" != slurp(dir() + "/golden/fusion.golden")) {
    bad = "golden mismatch";
  }
  EvalCounters plain, fused;
  RtPtr a = evalExpr(nullptr, s, {}, &plain);
  RtPtr b = evalExpr(nullptr, o, {}, &fused);
  if (bad.empty() && (!rtEq(a, direct) || !rtEq(b, direct))) bad = "results changed";
  if (bad.empty() && fused.nodesEvaluated >= plain.nodesEvaluated) {
    bad = "node count not reduced";
  }
  double ms = msSince(t0);
  std::ostringstream det;
  det << "nodes " << plain.nodesEvaluated << " -> " << fused.nodesEvaluated;
  if (!bad.empty()) det << ", failed: " << bad;
  det << ", " << ms << " ms";
  report(9, "producer-consumer loops fuse", bad.empty(), det.str());
}

// ---------------------------------------------------------------------------
// 10. Mandelbrot end to end.

void criterion10() {
  auto t0 = std::chrono::steady_clock::now();
  std::string bad;
  std::string src = slurp(dir() + "/fixtures/mandelbrot.dexlet");
  auto interior = [&](const RtPtr& grid, bool& rangeOk) {
    int count = 0;
    rangeOk = true;
    for (const auto& row : asRt<RTable>(grid)->elems) {
      for (const auto& cell : asRt<RTable>(row)->elems) {
        double v = scalar(cell);
        if (v < 0 || v > 100) rangeOk = false;
        if (v == 100) ++count;
      }
    }
    return count;
  };
  bool rangeOk = true;
  RtPtr first = runSimpl(src);
  int expect = interior(first, rangeOk);
  if (!rangeOk) bad = "escape time out of [0, 100]";
  if (bad.empty() && expect == 0) bad = "no interior points";
  if (bad.empty() && interior(runSimpl(src), rangeOk) != expect) {
    bad = "unstable across runs";
  }
  for (int chunks : {2, 3, 7}) {
    if (!bad.empty()) break;
    EvalOptions opts;
    opts.chunks = chunks;
    if (interior(runSimpl(src, opts), rangeOk) != expect || !rangeOk) {
      bad = "unstable at chunks=" + std::to_string(chunks);
    }
  }
  double ms = msSince(t0);
  std::ostringstream det;
  det << "30x20 grid, 100 iterations, " << expect << " interior points";
  if (!bad.empty()) det << ", failed: " << bad;
  det << ", " << ms << " ms";
  report(10, "mandelbrot escape times are stable", bad.empty() && ms < 5000,
         det.str());
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();
  criterion7();
  criterion8();
  criterion9();
  criterion10();
  if (failures) {
    std::printf("%d criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
