#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dexlet/errors.hpp"
#include "dexlet/parser.hpp"
#include "dexlet/printer.hpp"

using namespace dexlet;

namespace {

ExprPtr roundTrip(const ExprPtr& e) { return parseCore(printExpr(e)); }

}  // namespace

TEST_CASE("empty program is a parse error") {
  CHECK_THROWS_AS(parseProgram("", "t.dexlet"), DexError);
}

TEST_CASE("simple declaration and final expression") {
  NameSupply::reset();
  ElabProgram p = parseProgram("x = 2.0\nx * x\n", "t.dexlet");
  REQUIRE(p.decls.size() == 1);
  CHECK(p.decls[0].surfaceName == "x");
  CHECK(as<VBase>(p.decls[0].type)->kind == BaseKind::Float);
  REQUIRE(p.finalExpr != nullptr);
  CHECK(alphaEq(roundTrip(p.whole()), p.whole()));
}

TEST_CASE("multi binder for with inferred domains") {
  NameSupply::reset();
  const char* src =
      "m = [[1.0, 2.0], [3.0, 4.0]]\n"
      "t = for i j. m.j.i\n"
      "t\n";
  ElabProgram p = parseProgram(src, "t.dexlet");
  const ElabDecl* t = p.find("t");
  REQUIRE(t != nullptr);
  // Transposition swaps the axes: both Fin 2 here.
  const auto* arr = as<VArrayType>(t->type);
  REQUIRE(arr != nullptr);
  CHECK(as<VFinType>(arr->dom) != nullptr);
  CHECK(alphaEq(roundTrip(p.whole()), p.whole()));
}

TEST_CASE("unconstrained for binder is an error") {
  CHECK_THROWS_WITH_AS(parseProgram("x = for i. 0.0\nx\n", "t.dexlet"),
                       doctest::Contains("binder"), DexError);
}

TEST_CASE("state sugar desugars to runState and put") {
  NameSupply::reset();
  const char* src =
      "c = yieldState 0.0 \\r.\n"
      "  r := (get r) + 1.0\n"
      "c\n";
  ElabProgram p = parseProgram(src, "t.dexlet");
  CHECK(as<VBase>(p.find("c")->type)->kind == BaseKind::Float);
  std::string printed = printExpr(p.whole());
  CHECK(printed.find("runState") != std::string::npos);
  CHECK(printed.find(":=") != std::string::npos);
  CHECK(alphaEq(roundTrip(p.whole()), p.whole()));
}

TEST_CASE("sum desugars to runAccum") {
  NameSupply::reset();
  const char* src =
      "xs = [1.0, 2.0, 3.0]\n"
      "total = sum xs\n"
      "total\n";
  ElabProgram p = parseProgram(src, "t.dexlet");
  CHECK(as<VBase>(p.find("total")->type)->kind == BaseKind::Float);
  std::string printed = printExpr(p.whole());
  CHECK(printed.find("runAccum") != std::string::npos);
  CHECK(printed.find("+=") != std::string::npos);
  CHECK(alphaEq(roundTrip(p.whole()), p.whole()));
}

TEST_CASE("accumulator type inferred from slicing") {
  NameSupply::reset();
  const char* src =
      "points = [@0, @1, @0, @2, @0] : (Fin 5) => (Fin 3)\n"
      "hist = yieldAccum \\h.\n"
      "  for i. h!(points.i) += 1.0\n"
      "hist\n";
  // Annotated declarations use the name : T = rhs form.
  const char* src2 =
      "points : (Fin 5) => (Fin 3) = [@0, @1, @0, @2, @0]\n"
      "hist = yieldAccum \\h.\n"
      "  for i. h!(points.i) += 1.0\n"
      "hist\n";
  (void)src;
  ElabProgram p = parseProgram(src2, "t.dexlet");
  const auto* arr = as<VArrayType>(p.find("hist")->type);
  REQUIRE(arr != nullptr);
  CHECK(as<VFinType>(arr->dom) != nullptr);
  CHECK(alphaEq(roundTrip(p.whole()), p.whole()));
}

TEST_CASE("grad desugars to transpose of snd of linearize") {
  NameSupply::reset();
  const char* src =
      "def f (x : Float) : Float = x * x\n"
      "g = grad f 3.0\n"
      "g\n";
  ElabProgram p = parseProgram(src, "t.dexlet");
  std::string printed = printExpr(p.whole());
  CHECK(printed.find("linearize") != std::string::npos);
  CHECK(printed.find("transpose") != std::string::npos);
  CHECK(as<VBase>(p.find("g")->type)->kind == BaseKind::Float);
  CHECK(alphaEq(roundTrip(p.whole()), p.whole()));
}

TEST_CASE("if and comparison desugar to case over Either Unit Unit") {
  NameSupply::reset();
  const char* src =
      "x = 3.0\n"
      "y = if x < 4.0 then 1.0 else 0.0\n"
      "y\n";
  ElabProgram p = parseProgram(src, "t.dexlet");
  std::string printed = printExpr(p.whole());
  CHECK(printed.find("case") != std::string::npos);
  CHECK(printed.find("<") != std::string::npos);
  CHECK(alphaEq(roundTrip(p.whole()), p.whole()));
}

TEST_CASE("pair patterns destructure with fst and snd") {
  NameSupply::reset();
  const char* src =
      "p = (1.0, 2.0)\n"
      "q =\n"
      "  (a, b) = p\n"
      "  a + b\n"
      "q\n";
  ElabProgram p = parseProgram(src, "t.dexlet");
  CHECK(as<VBase>(p.find("q")->type)->kind == BaseKind::Float);
  std::string printed = printExpr(p.whole());
  CHECK(printed.find("fst") != std::string::npos);
  CHECK(printed.find("snd") != std::string::npos);
  CHECK(alphaEq(roundTrip(p.whole()), p.whole()));
}

TEST_CASE("value literal parser reads points") {
  ValuePtr expect = vArray(vFin(vInt(2)), vBase(BaseKind::Float));
  ValuePtr v = parseValueLiteral("[1.0, 2]", expect);
  const auto* t = as<VTableLit>(v);
  REQUIRE(t != nullptr);
  REQUIRE(t->elems.size() == 2);
  CHECK(as<VLitFloat>(t->elems[1])->v == 2.0);

  ValuePtr s = parseValueLiteral("3.5", vBase(BaseKind::Float));
  CHECK(as<VLitFloat>(s)->v == 3.5);

  ValuePtr pr = parseValueLiteral("(1.0, [2.0])", nullptr);
  CHECK(as<VPair>(pr) != nullptr);
}

TEST_CASE("view syntax parses to a view value") {
  NameSupply::reset();
  const char* src =
      "xs = [1.0, 2.0]\n"
      "v = view i : (Fin 2). xs.i\n"
      "v\n";
  ElabProgram p = parseProgram(src, "t.dexlet");
  std::string printed = printExpr(p.whole());
  CHECK(printed.find("view") != std::string::npos);
  CHECK(alphaEq(roundTrip(p.whole()), p.whole()));
}

TEST_CASE("case expression binds payloads") {
  NameSupply::reset();
  const char* src =
      "s = Left Float 1.0\n"
      "r = case s of\n"
      "  Left x -> x + 1.0\n"
      "  Right y -> y\n"
      "r\n";
  ElabProgram p = parseProgram(src, "t.dexlet");
  CHECK(as<VBase>(p.find("r")->type)->kind == BaseKind::Float);
  CHECK(alphaEq(roundTrip(p.whole()), p.whole()));
}
