#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "dexlet/autodiff.hpp"
#include "dexlet/errors.hpp"
#include "dexlet/eval.hpp"
#include "dexlet/parser.hpp"
#include "dexlet/printer.hpp"
#include "dexlet/simplify.hpp"
#include "dexlet/typecheck.hpp"

using namespace dexlet;

namespace {

// Central finite differences with this step are the oracle for every
// derivative below; agreement is |grad - fd| <= kFdTol * (1 + |fd|).
constexpr double kFdStep = 1e-4;
constexpr double kFdTol = 1e-4;

ExprPtr compile(const std::string& src) {
  NameSupply::reset();
  ElabProgram p = parseProgram(src.c_str(), "t.dexlet");
  TypeEnv env;
  checkExpr(Capability::pure(), env, p.whole());
  return p.whole();
}

RtPtr runSimpl(const std::string& src, EvalCounters* c = nullptr) {
  ExprPtr s = optimize(simplifyExpr(compile(src)));
  REQUIRE(isFirstOrder(s));
  return evalExpr(nullptr, s, {}, c);
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

std::string lit(double x) {
  std::ostringstream t;
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

bool closeToFd(double grad, double fd) {
  return std::abs(grad - fd) <= kFdTol * (1 + std::abs(fd));
}

// fnDef binds f; the gradient of f at pt must match central differences
// componentwise.
void checkGradAgainstFd(const std::string& fnDef, const std::vector<double>& pt) {
  std::vector<double> g =
      floats(runSimpl(fnDef + "g = grad f " + vecLit(pt) + "\ng\n"));
  REQUIRE(g.size() == pt.size());
  for (size_t k = 0; k < pt.size(); ++k) {
    std::vector<double> hi = pt, lo = pt;
    hi[k] += kFdStep;
    lo[k] -= kFdStep;
    double fHi = scalar(runSimpl(fnDef + "y = f " + vecLit(hi) + "\ny\n"));
    double fLo = scalar(runSimpl(fnDef + "y = f " + vecLit(lo) + "\ny\n"));
    double fd = (fHi - fLo) / (2 * kFdStep);
    CHECK(closeToFd(g[k], fd));
  }
}

ValuePtr floatT() { return vBase(BaseKind::Float); }
ValuePtr intT() { return vBase(BaseKind::Int); }
ValuePtr unitT() { return vBase(BaseKind::Unit); }

}  // namespace

TEST_CASE("tangent types") {
  CHECK(alphaEq(tangentType(floatT()), floatT()));
  CHECK(alphaEq(tangentType(intT()), unitT()));
  CHECK(alphaEq(tangentType(unitT()), unitT()));
  CHECK(alphaEq(tangentType(vFin(vInt(5))), unitT()));
  CHECK(alphaEq(tangentType(vPairType(floatT(), intT())),
                vPairType(floatT(), unitT())));
  CHECK(alphaEq(tangentType(vArray(vFin(vInt(3)), floatT())),
                vArray(vFin(vInt(3)), floatT())));
  try {
    tangentType(vEitherType(floatT(), floatT()));
    FAIL("expected a tangent error");
  } catch (const DexError& e) {
    CHECK(e.code() == ErrCode::UnsupportedTangent);
  }
}

TEST_CASE("zero values") {
  const auto* z = as<VLitFloat>(zeroValue(floatT()));
  REQUIRE(z != nullptr);
  CHECK(z->v == 0.0);
  const auto* p = as<VPair>(zeroValue(vPairType(floatT(), unitT())));
  REQUIRE(p != nullptr);
  CHECK(as<VLitFloat>(p->l) != nullptr);
  CHECK(as<VLitUnit>(p->r) != nullptr);
  CHECK(as<VView>(zeroValue(vArray(vFin(vInt(4)), floatT()))) != nullptr);
}

TEST_CASE("gradient of x*x at 3 is 6") {
  CHECK(scalar(runSimpl("g = grad (\\x:Float. x * x) 3.0\ng\n")) ==
        doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("gradient of sum of squares") {
  std::vector<double> g = floats(runSimpl(
      "f = \\xs:((Fin 2)=>Float). sum (for i. (xs.i) * (xs.i))\n"
      "g = grad f [1.0, 2.0]\n"
      "g\n"));
  REQUIRE(g.size() == 2);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("linearize returns the primal paired with the derivative map") {
  RtPtr r = runSimpl(
      "p = linearize (\\x:Float. x * x) 3.0\n"
      "y = fst p\n"
      "df = snd p\n"
      "dy = df 1.0\n"
      "(y, dy)\n");
  const auto* pr = asRt<RPairVal>(r);
  REQUIRE(pr != nullptr);
  CHECK(scalar(pr->l) == 9.0);
  CHECK(scalar(pr->r) == doctest::Approx(6.0).epsilon(1e-12));

  // The derivative map is linear: df (a + b) = df a + df b.
  RtPtr s = runSimpl(
      "p = linearize (\\x:Float. (x * x) * x) 2.0\n"
      "df = snd p\n"
      "a = df 1.5\n"
      "b = df 2.5\n"
      "c = df 4.0\n"
      "(a + b, c)\n");
  const auto* sp = asRt<RPairVal>(s);
  REQUIRE(sp != nullptr);
  CHECK(scalar(sp->l) == doctest::Approx(scalar(sp->r)).epsilon(1e-9));
}

TEST_CASE("gradients agree with central finite differences") {
  checkGradAgainstFd("f = \\xs:((Fin 3)=>Float). sum xs\n", {1.0, 2.0, 3.0});
  checkGradAgainstFd(
      "f = \\xs:((Fin 3)=>Float). sum (for i. (xs.i) * (xs.i))\n",
      {1.0, 2.0, 3.0});
  checkGradAgainstFd(
      "f = \\xs:((Fin 4)=>Float). sum (for i. (xs.i) * (xs.(reverse i)))\n",
      {1.0, -2.0, 0.5, 3.0});
  checkGradAgainstFd(
      "c = [0.5, 1.5, 2.5]\n"
      "f = \\xs:((Fin 3)=>Float). sum (for i. ((xs.i) * (c.i)) + (xs.i))\n",
      {1.0, 2.0, 3.0});
}

TEST_CASE("gradient through a stateful recurrence") {
  const std::string fnDef =
      "f = \\xs:((Fin 3)=>Float). yieldState 0.0 \\s.\n"
      "  for i. s := ((get s) * 2.0) + (xs.i)\n"
      "  ()\n";
  checkGradAgainstFd(fnDef, {1.0, 2.0, 3.0});
  // s3 = 4 x0 + 2 x1 + x2, so the gradient is exactly (4, 2, 1).
  std::vector<double> g =
      floats(runSimpl(fnDef + "g = grad f [1.0, 2.0, 3.0]\ng\n"));
  REQUIRE(g.size() == 3);
  CHECK(g[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(g[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gradient of a matrix trace product") {
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
  RtPtr g = runSimpl(fnDef + "g = grad f " + mat(pt) + "\ng\n");
  const auto* rows = asRt<RTable>(g);
  REQUIRE(rows != nullptr);
  // d/dA tr(A B) = B^T.
  double expect[2][2] = {{5, 7}, {6, 8}};
  for (int r = 0; r < 2; ++r) {
    std::vector<double> row = floats(rows->elems[static_cast<size_t>(r)]);
    for (int c = 0; c < 2; ++c) {
      CHECK(row[static_cast<size_t>(c)] ==
            doctest::Approx(expect[r][c]).epsilon(1e-9));
      double hi[2][2], lo[2][2];
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) { hi[i][j] = pt[i][j]; lo[i][j] = pt[i][j]; }
      }
      hi[r][c] += kFdStep;
      lo[r][c] -= kFdStep;
      double fd = (scalar(runSimpl(fnDef + "y = f " + mat(hi) + "\ny\n")) -
                   scalar(runSimpl(fnDef + "y = f " + mat(lo) + "\ny\n"))) /
                  (2 * kFdStep);
      CHECK(closeToFd(row[static_cast<size_t>(c)], fd));
    }
  }
}

TEST_CASE("transpose of a dot product scales the constant vector") {
  std::vector<double> t = floats(runSimpl(
      "c = [2.0, 3.0, 5.0]\n"
      "t = transpose (\\x:((Fin 3)=>Float). sum (for i. (x.i) * (c.i))) 2.0\n"
      "t\n"));
  REQUIRE(t.size() == 3);
  CHECK(t[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(t[1] == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(t[2] == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("transpose of an index permutation permutes the cotangent") {
  std::vector<double> t = floats(runSimpl(
      "t = transpose (\\x:((Fin 3)=>Float). for i : Fin 3. (x.(reverse i)) * 2.0)"
      " [1.0, 2.0, 3.0]\n"
      "t\n"));
  REQUIRE(t.size() == 3);
  CHECK(t[0] == doctest::Approx(6.0).epsilon(1e-12));
  CHECK(t[1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(t[2] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("transpose satisfies the dot-product identity") {
  // <f x, y> = <x, transpose f y> for the linear map f x = c * x
  // componentwise, probed at a fixed x and y.
  std::vector<double> c = {2.0, -1.0, 0.5, 3.0};
  std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
  std::vector<double> y = {0.5, 1.0, -2.0, 1.5};
  std::string fnDef =
      "c = " + vecLit(c) + "\n";
  std::vector<double> fx = floats(runSimpl(
      fnDef + "r = for i. (c.i) * (" + vecLit(x) + ".i)\nr\n"));
  std::vector<double> fty = floats(runSimpl(
      fnDef +
      "t = transpose (\\x:((Fin 4)=>Float). for i. (c.i) * (x.i)) " +
      vecLit(y) + "\nt\n"));
  double lhs = 0, rhs = 0;
  for (size_t i = 0; i < 4; ++i) {
    lhs += fx[i] * y[i];
    rhs += x[i] * fty[i];
  }
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
}

TEST_CASE("rejects transposing a nonlinear body") {
  std::string src =
      "t = transpose (\\x:Float. x * x) 1.0\n"
      "t\n";
  ExprPtr e = compile(src);
  try {
    simplifyExpr(e);
    FAIL("expected a linearity error");
  } catch (const DexError& err) {
    CHECK(err.code() == ErrCode::NotLinear);
  }
}

TEST_CASE("gradient of one indexed read is one-hot and cheap") {
  EvalCounters c;
  std::vector<double> g = floats(runSimpl(
      "f = \\xs:((Fin 4)=>Float). xs.(@2 : Fin 4)\n"
      "g = grad f [1.0, 2.0, 3.0, 4.0]\n"
      "g\n",
      &c));
  REQUIRE(g.size() == 4);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
  CHECK(g[2] == 1.0);
  CHECK(g[3] == 0.0);
  // One scatter into the cotangent accumulator plus its zero-initialized
  // cells; no quadratic blowup.
  CHECK(c.accumUpdates <= 4);
}

TEST_CASE("differentiation stays within a constant work factor") {
  const std::string fnDef =
      "f = \\xs:((Fin 8)=>Float). sum (for i. (xs.i) * (xs.i))\n";
  const std::string pt = vecLit({1, 2, 3, 4, 5, 6, 7, 8});
  EvalCounters primal, grad;
  runSimpl(fnDef + "y = f " + pt + "\ny\n", &primal);
  runSimpl(fnDef + "g = grad f " + pt + "\ng\n", &grad);
  CHECK(grad.arithmeticOps <= 6 * primal.arithmeticOps + 16);
  CHECK(grad.accumUpdates <= 6 * primal.accumUpdates + 16);
}
