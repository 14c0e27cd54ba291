#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dexlet/errors.hpp"
#include "dexlet/eval.hpp"
#include "dexlet/parser.hpp"
#include "dexlet/typecheck.hpp"

using namespace dexlet;

namespace {

ExprPtr compile(const char* src) {
  NameSupply::reset();
  ElabProgram p = parseProgram(src, "t.dexlet");
  TypeEnv env;
  checkExpr(Capability::pure(), env, p.whole());
  return p.whole();
}

RtPtr run(const char* src, EvalOptions opts = {}, EvalCounters* c = nullptr) {
  return evalExpr(nullptr, compile(src), opts, c);
}

double scalar(const RtPtr& v) {
  const auto* s = asRt<RScalar>(v);
  REQUIRE(s != nullptr);
  return s->v;
}

std::vector<double> floats(const RtPtr& v) {
  const auto* t = asRt<RTable>(v);
  REQUIRE(t != nullptr);
  std::vector<double> out;
  for (const auto& e : t->elems) out.push_back(scalar(e));
  return out;
}

const char* kMatmul =
    "x = [[1.0, 2.0], [3.0, 4.0]]\n"
    "y = [[5.0, 6.0], [7.0, 8.0]]\n"
    "z = for i k.\n"
    "  prods = for j. (x.i.j) * (y.j.k)\n"
    "  sum prods\n"
    "z\n";

const char* kHistogram =
    "points : (Fin 5) => (Fin 3) = [@0, @1, @0, @2, @0]\n"
    "hist = yieldAccum \\h.\n"
    "  for i. h!(points.i) += 1.0\n"
    "hist\n";

const char* kSum =
    "xs = [1.0, 2.0, 3.0, 4.0]\n"
    "total = sum xs\n"
    "total\n";

}  // namespace

TEST_CASE("matmul against the brute-force oracle") {
  double x[2][2] = {{1, 2}, {3, 4}};
  double y[2][2] = {{5, 6}, {7, 8}};
  double expect[2][2] = {};
  for (int i = 0; i < 2; ++i) {
    for (int k = 0; k < 2; ++k) {
      for (int j = 0; j < 2; ++j) expect[i][k] += x[i][j] * y[j][k];
    }
  }
  RtPtr r = run(kMatmul);
  const auto* rows = asRt<RTable>(r);
  REQUIRE(rows != nullptr);
  REQUIRE(rows->elems.size() == 2);
  for (int i = 0; i < 2; ++i) {
    std::vector<double> row = floats(rows->elems[static_cast<size_t>(i)]);
    REQUIRE(row.size() == 2);
    CHECK(row[0] == expect[i][0]);
    CHECK(row[1] == expect[i][1]);
  }
  CHECK(printResult(r) == "[[19, 22], [43, 50]]");
}

TEST_CASE("histogram against the counting oracle") {
  int points[5] = {0, 1, 0, 2, 0};
  int expect[3] = {};
  for (int p : points) ++expect[p];
  EvalCounters c;
  RtPtr r = run(kHistogram, {}, &c);
  std::vector<double> hist = floats(r);
  REQUIRE(hist.size() == 3);
  for (int k = 0; k < 3; ++k) CHECK(hist[static_cast<size_t>(k)] == expect[k]);
  CHECK(c.accumUpdates == 5);
}

TEST_CASE("escape-time loop counts one in-bounds step at c = (-2, -1)") {
  const char* src =
      "cr = 0.0 - 2.0\n"
      "ci = 0.0 - 1.0\n"
      "et = yieldState 0.0 \\n.\n"
      "  _ = yieldState (0.0, 0.0) \\z.\n"
      "    for i : Fin 1000.\n"
      "      p = get z\n"
      "      zr = fst p\n"
      "      zi = snd p\n"
      "      m = (zr * zr) + (zi * zi)\n"
      "      b = if m < 4.0 then 1.0 else 0.0\n"
      "      _ = n := (get n) + b\n"
      "      z := ((((zr * zr) - (zi * zi)) + cr), (((2.0 * zr) * zi) + ci))\n"
      "  ()\n"
      "et\n";
  // Oracle: scalar replay of the same loop.
  double zr = 0, zi = 0, count = 0;
  for (int i = 0; i < 1000; ++i) {
    if (zr * zr + zi * zi < 4.0) count += 1.0;
    double nr = zr * zr - zi * zi + (-2.0);
    double ni = 2.0 * zr * zi + (-1.0);
    zr = nr;
    zi = ni;
  }
  CHECK(count == 1.0);
  CHECK(scalar(run(src)) == count);
}

TEST_CASE("work counters") {
  EvalCounters c;
  CHECK(scalar(run(kSum, {}, &c)) == 10.0);
  CHECK(c.accumUpdates == 4);
  CHECK(c.arithmeticOps == 4);
  CHECK(c.cellsAllocated == 1);

  EvalCounters lit;
  CHECK(scalar(run("x = 3.0\nx\n", {}, &lit)) == 3.0);
  CHECK(lit.arithmeticOps == 0);
  CHECK(lit.accumUpdates == 0);
  CHECK(lit.cellsAllocated == 0);
}

TEST_CASE("histogram work stays linear in n across sizes") {
  for (int n : {8, 32, 64}) {
    std::string src = "points : (Fin " + std::to_string(n) + ") => (Fin 4) = [";
    for (int i = 0; i < n; ++i) {
      if (i) src += ", ";
      src += "@" + std::to_string(i % 4);
    }
    src +=
        "]\n"
        "hist = yieldAccum \\h.\n"
        "  for i. h!(points.i) += 1.0\n"
        "hist\n";
    EvalCounters c;
    RtPtr r = run(src.c_str(), {}, &c);
    CHECK(c.accumUpdates == n);
    std::vector<double> hist = floats(r);
    for (double v : hist) CHECK(v == n / 4);
  }
}

TEST_CASE("parallel chunks combine deterministically") {
  RtPtr seq = run(kSum);
  for (int chunks : {1, 2, 3, 7}) {
    EvalOptions opts;
    opts.chunks = chunks;
    RtPtr par = run(kSum, opts);
    CHECK(scalar(par) == scalar(seq));
  }
  RtPtr histSeq = run(kHistogram);
  for (int chunks : {1, 2, 3, 7}) {
    EvalOptions opts;
    opts.chunks = chunks;
    CHECK(rtEq(run(kHistogram, opts), histSeq));
  }
  RtPtr mmSeq = run(kMatmul);
  for (int chunks : {2, 3}) {
    EvalOptions opts;
    opts.chunks = chunks;
    CHECK(rtEq(run(kMatmul, opts), mmSeq));
  }
}

TEST_CASE("stateful loops are rejected from forced parallel mode") {
  Name h = NameSupply::fresh("h"), r = NameSupply::fresh("r");
  Name i = NameSupply::fresh("i"), x = NameSupply::fresh("x");
  ExprPtr loop = eFor(i, vFin(vInt(4)), eGet(vVar(r)));
  CHECK(forBodyBlocksParallel(as<EFor>(loop)->body));

  auto cell = std::make_shared<Cell>();
  cell->value = mkRt(RScalar{1.0});
  EnvPtr env = envBind(nullptr, r, mkRt(RRefVal{cell, {}}));
  CHECK_THROWS_AS(evalParallelFor(env, loop, 2), DexError);

  // The same loop under its own handler is fine: the cell is local.
  ExprPtr handled = eRunState(
      vFloat(1.0),
      Action{h, r, nullptr,
             eLet(x, nullptr, eFor(i, vFin(vInt(4)), eGet(vVar(r))),
                  eRet(vVar(x)))});
  ExprPtr outer = eFor(NameSupply::fresh("j"), vFin(vInt(2)), handled);
  CHECK(!forBodyBlocksParallel(as<EFor>(outer)->body));
}

TEST_CASE("stateful cumulative loop runs sequentially under chunked options") {
  const char* src =
      "xs = [1.0, 2.0, 3.0, 4.0]\n"
      "c = yieldState 0.0 \\acc.\n"
      "  for i. acc := (get acc) + (xs.i)\n"
      "  ()\n"
      "c\n";
  EvalOptions opts;
  opts.chunks = 3;
  CHECK(scalar(run(src, opts)) == 10.0);
}

TEST_CASE("for and view agree pointwise") {
  const char* eager =
      "t = for i : Fin 5. itof (ord i)\n"
      "t\n";
  const char* lazy =
      "v = view i : Fin 5. itof (ord i)\n"
      "probe = for j : Fin 5. v.j\n"
      "probe\n";
  CHECK(rtEq(run(eager), run(lazy)));
}

TEST_CASE("evaluation is repeatable") {
  RtPtr a = run(kHistogram);
  RtPtr b = run(kHistogram);
  CHECK(rtEq(a, b));
}

TEST_CASE("index arithmetic primitives") {
  CHECK(scalar(run("x = itof (ord (@3 : Fin 7))\nx\n")) == 3.0);
  RtPtr r = run("x = reverse (@1 : Fin 5)\nx\n");
  const auto* i = asRt<RIndexVal>(r);
  REQUIRE(i != nullptr);
  CHECK(i->ord == 3);
}

TEST_CASE("references slice and write through paths") {
  const char* src =
      "m = yieldState [[0.0, 0.0], [0.0, 0.0]] \\r.\n"
      "  row = r!(@1 : Fin 2)\n"
      "  cell = row!(@0 : Fin 2)\n"
      "  cell := 5.0\n"
      "m\n";
  CHECK(printResult(run(src)) == "[[0, 0], [5, 0]]");
}

TEST_CASE("case evaluation picks the live branch") {
  const char* src =
      "s = Left Float 2.0\n"
      "r = case s of\n"
      "  Left x -> x + 1.0\n"
      "  Right y -> y\n"
      "r\n";
  CHECK(scalar(run(src)) == 3.0);
}
