#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dexlet/errors.hpp"
#include "dexlet/parser.hpp"
#include "dexlet/printer.hpp"
#include "dexlet/typecheck.hpp"

using namespace dexlet;

namespace {

Name n(const char* text) { return NameSupply::fresh(text); }

ValuePtr tFloat() { return vBase(BaseKind::Float); }
ValuePtr tInt() { return vBase(BaseKind::Int); }
ValuePtr tUnit() { return vBase(BaseKind::Unit); }

ErrCode codeOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const DexError& e) {
    return e.code();
  }
  FAIL("expected a DexError");
  return ErrCode::Internal;
}

}  // namespace

TEST_CASE("lambda doubles a float") {
  TypeEnv env;
  Name x = n("x");
  ValuePtr lam = vLam(x, tFloat(), eBin(BinOp::Add, vVar(x), vVar(x)));
  ValuePtr t = checkValue(env, lam);
  const auto* arrow = as<VArrow>(t);
  REQUIRE(arrow != nullptr);
  CHECK(arrow->effects.pure());
  CHECK(alphaEq(arrow->dom, tFloat()));
  CHECK(alphaEq(arrow->cod, tFloat()));
}

TEST_CASE("views must be pure") {
  TypeEnv env;
  Name h = n("h"), r = n("r"), i = n("i");
  env.bind(h, vBase(BaseKind::Type));
  env.bind(r, vRef(vVar(h), tFloat()));
  ValuePtr view = vView(i, vFin(vInt(3)), eGet(vVar(r)));
  CHECK(codeOf([&] { checkValue(env, view); }) == ErrCode::Effect);
}

TEST_CASE("array domain must satisfy the index-set constraint") {
  TypeEnv env;
  Name x = n("x");
  env.bind(x, vBase(BaseKind::Type));
  CHECK(codeOf([&] { checkValue(env, vArray(vVar(x), tFloat())); }) ==
        ErrCode::Constraint);
  CHECK(codeOf([&] { checkValue(env, vArray(tFloat(), tFloat())); }) ==
        ErrCode::Constraint);
}

TEST_CASE("get needs the State capability") {
  TypeEnv env;
  Name h = n("h"), r = n("r");
  env.bind(h, vBase(BaseKind::Type));
  env.bind(r, vRef(vVar(h), tFloat()));
  CHECK(codeOf([&] { checkExpr(Capability::pure(), env, eGet(vVar(r))); }) ==
        ErrCode::Effect);
  Capability cap;
  cap.row.entries.push_back({EffectKind::State, vVar(h)});
  CHECK(alphaEq(checkExpr(cap, env, eGet(vVar(r))), tFloat()));
}

TEST_CASE("runState returns result paired with final state") {
  TypeEnv env;
  Name h = n("h"), r = n("r"), a = n("a"), b = n("b");
  ExprPtr body = eLet(a, nullptr, eGet(vVar(r)),
                      eLet(b, nullptr, eGet(vVar(r)),
                           eRet(vPair(vVar(a), vVar(b)))));
  ExprPtr rs = eRunState(vFloat(0.0), Action{h, r, nullptr, body});
  EffectRow used;
  ValuePtr t = checkExpr(Capability::pure(), env, rs, &used);
  CHECK(alphaEq(t, vPairType(vPairType(tFloat(), tFloat()), tFloat())));
  CHECK(used.pure());
}

TEST_CASE("runAccum discharges the Accum effect") {
  TypeEnv env;
  Name h = n("h"), r = n("r"), u = n("u");
  ExprPtr body = eLet(u, nullptr, eAccum(vVar(r), vFloat(1.0)), eRet(vUnit()));
  ExprPtr ra = eRunAccum(Action{h, r, vRef(vVar(h), tFloat()), body});
  ValuePtr t = checkExpr(Capability::pure(), env, ra);
  CHECK(alphaEq(t, vPairType(tUnit(), tFloat())));
}

TEST_CASE("accumulators must hold vector-space values") {
  TypeEnv env;
  Name h = n("h"), r = n("r"), u = n("u");
  ExprPtr body = eLet(u, nullptr, eAccum(vVar(r), vInt(1)), eRet(vUnit()));
  ExprPtr ra = eRunAccum(Action{h, r, vRef(vVar(h), tInt()), body});
  CHECK(codeOf([&] { checkExpr(Capability::pure(), env, ra); }) ==
        ErrCode::Constraint);
}

TEST_CASE("lambda arrows record the effects their bodies use") {
  TypeEnv env;
  Name h = n("h"), r = n("r"), x = n("x");
  env.bind(h, vBase(BaseKind::Type));
  env.bind(r, vRef(vVar(h), tFloat()));
  ValuePtr lam = vLam(x, tFloat(), eGet(vVar(r)));
  ValuePtr t = checkValue(env, lam);
  const auto* arrow = as<VArrow>(t);
  REQUIRE(arrow != nullptr);
  REQUIRE(arrow->effects.entries.size() == 1);
  CHECK(arrow->effects.entries[0].kind == EffectKind::State);
  CHECK(alphaEq(arrow->effects.entries[0].region, vVar(h)));
}

TEST_CASE("application substitutes into a dependent codomain") {
  TypeEnv env;
  Name nn = n("n"), i = n("i"), f = n("f");
  ValuePtr lam = vLam(nn, tInt(), eFor(i, vFin(vVar(nn)), eRet(vFloat(0.0))));
  env.bind(f, checkValue(env, lam));
  ValuePtr t = checkExpr(Capability::pure(), env, eApp(vVar(f), vInt(3)));
  CHECK(alphaEq(t, vArray(vFin(vInt(3)), tFloat())));
}

TEST_CASE("let annotations are verified") {
  TypeEnv env;
  Name x = n("x");
  ExprPtr good = eLet(x, tFloat(), eRet(vFloat(1.0)), eRet(vVar(x)));
  CHECK(alphaEq(checkExpr(Capability::pure(), env, good), tFloat()));
  ExprPtr bad = eLet(x, tInt(), eRet(vFloat(1.0)), eRet(vVar(x)));
  CHECK(codeOf([&] { checkExpr(Capability::pure(), env, bad); }) == ErrCode::Type);
}

TEST_CASE("indexing requires the matching domain") {
  TypeEnv env;
  Name a = n("a");
  env.bind(a, vArray(vFin(vInt(2)), tFloat()));
  ExprPtr ok = eIndex(vVar(a), vFinLit(1, vInt(2)));
  CHECK(alphaEq(checkExpr(Capability::pure(), env, ok), tFloat()));
  ExprPtr bad = eIndex(vVar(a), vFinLit(1, vInt(3)));
  CHECK(codeOf([&] { checkExpr(Capability::pure(), env, bad); }) == ErrCode::Type);
}

TEST_CASE("comparison yields a sum of units") {
  TypeEnv env;
  ValuePtr t = checkExpr(Capability::pure(), env,
                         eBin(BinOp::Less, vFloat(1.0), vFloat(2.0)));
  CHECK(alphaEq(t, vEitherType(tUnit(), tUnit())));
  CHECK(codeOf([&] {
          checkExpr(Capability::pure(), env, eBin(BinOp::Add, vInt(1), vInt(2)));
        }) == ErrCode::Type);
}

TEST_CASE("ordinal works on index sets only") {
  TypeEnv env;
  ValuePtr t = checkExpr(Capability::pure(), env,
                         eUn(UnOp::Ordinal, vFinLit(2, vInt(5))));
  CHECK(alphaEq(t, tInt()));
  CHECK(codeOf([&] {
          checkExpr(Capability::pure(), env, eUn(UnOp::Ordinal, vFloat(1.0)));
        }) == ErrCode::Constraint);
}

TEST_CASE("index literals are bounds checked") {
  TypeEnv env;
  CHECK(codeOf([&] { checkValue(env, vFinLit(5, vInt(5))); }) ==
        ErrCode::OutOfBounds);
  CHECK(alphaEq(checkValue(env, vFinLit(4, vInt(5))), vFin(vInt(5))));
}

TEST_CASE("table literals match their domain size") {
  TypeEnv env;
  ValuePtr good = vTableLit(vFin(vInt(2)), {vFloat(1.0), vFloat(2.0)});
  CHECK(alphaEq(checkValue(env, good), vArray(vFin(vInt(2)), tFloat())));
  ValuePtr bad = vTableLit(vFin(vInt(3)), {vFloat(1.0), vFloat(2.0)});
  CHECK(codeOf([&] { checkValue(env, bad); }) == ErrCode::Type);
  ValuePtr mixed = vTableLit(vFin(vInt(2)), {vFloat(1.0), vInt(2)});
  CHECK(codeOf([&] { checkValue(env, mixed); }) == ErrCode::Type);
}

TEST_CASE("linearize needs a pure vector-space function") {
  TypeEnv env;
  Name x = n("x"), y = n("y"), h = n("h"), r = n("r");
  ValuePtr sq = vLam(x, tFloat(), eBin(BinOp::Mul, vVar(x), vVar(x)));
  ValuePtr t = checkExpr(Capability::pure(), env, eLinearize(sq, vFloat(2.0)));
  const auto* pair = as<VPairType>(t);
  REQUIRE(pair != nullptr);
  CHECK(alphaEq(pair->l, tFloat()));
  CHECK(as<VArrow>(pair->r) != nullptr);

  ValuePtr intFn = vLam(y, tInt(), eRet(vFloat(0.0)));
  CHECK(codeOf([&] {
          checkExpr(Capability::pure(), env, eLinearize(intFn, vInt(1)));
        }) == ErrCode::Constraint);

  env.bind(h, vBase(BaseKind::Type));
  env.bind(r, vRef(vVar(h), tFloat()));
  ValuePtr impure = vLam(y, tFloat(), eGet(vVar(r)));
  CHECK(codeOf([&] {
          checkExpr(Capability::pure(), env, eLinearize(impure, vFloat(1.0)));
        }) == ErrCode::Effect);
}

TEST_CASE("transpose types run backwards") {
  TypeEnv env;
  Name x = n("x");
  ValuePtr dbl = vLam(x, tFloat(), eBin(BinOp::Add, vVar(x), vVar(x)));
  ValuePtr t = checkExpr(Capability::pure(), env, eTranspose(dbl, vFloat(1.0)));
  CHECK(alphaEq(t, tFloat()));
}

TEST_CASE("handler regions may not escape in the result type") {
  TypeEnv env;
  Name h = n("h"), r = n("r");
  ExprPtr body = eRet(vVar(r));
  ExprPtr rs = eRunState(vFloat(0.0), Action{h, r, nullptr, body});
  CHECK(codeOf([&] { checkExpr(Capability::pure(), env, rs); }) ==
        ErrCode::EscapedRef);
}

TEST_CASE("slicing strips one array layer off a reference") {
  TypeEnv env;
  Name h = n("h"), r = n("r");
  env.bind(h, vBase(BaseKind::Type));
  env.bind(r, vRef(vVar(h), vArray(vFin(vInt(3)), tFloat())));
  ValuePtr t = checkExpr(Capability::pure(), env,
                         eSlice(vVar(r), vFinLit(1, vInt(3))));
  CHECK(alphaEq(t, vRef(vVar(h), tFloat())));
}

TEST_CASE("case branches must agree") {
  TypeEnv env;
  Name s = n("s"), a = n("a"), b = n("b");
  env.bind(s, vEitherType(tFloat(), tInt()));
  ExprPtr ok = eCase(vVar(s), a, eRet(vVar(a)), b, eUn(UnOp::IntToFloat, vVar(b)));
  CHECK(alphaEq(checkExpr(Capability::pure(), env, ok), tFloat()));
  ExprPtr bad = eCase(vVar(s), a, eRet(vVar(a)), b, eRet(vVar(b)));
  CHECK(codeOf([&] { checkExpr(Capability::pure(), env, bad); }) == ErrCode::Type);
}

TEST_CASE("checking is stable under capability weakening") {
  TypeEnv env;
  Name h = n("h"), r = n("r"), x = n("x");
  env.bind(h, vBase(BaseKind::Type));
  env.bind(r, vRef(vVar(h), tFloat()));
  ExprPtr e = eLet(x, nullptr, eGet(vVar(r)), eBin(BinOp::Mul, vVar(x), vVar(x)));
  Capability narrow;
  narrow.row.entries.push_back({EffectKind::State, vVar(h)});
  Capability wide = narrow;
  wide.row.entries.push_back({EffectKind::Accum, vVar(n("h2"))});
  EffectRow usedNarrow, usedWide;
  ValuePtr t1 = checkExpr(narrow, env, e, &usedNarrow);
  ValuePtr t2 = checkExpr(wide, env, e, &usedWide);
  CHECK(alphaEq(t1, t2));
  CHECK(effectRowEq(usedNarrow, usedWide));
}

TEST_CASE("elaborated surface programs typecheck") {
  NameSupply::reset();
  const char* src =
      "points : (Fin 5) => (Fin 3) = [@0, @1, @0, @2, @0]\n"
      "hist = yieldAccum \\h.\n"
      "  for i. h!(points.i) += 1.0\n"
      "hist\n";
  ElabProgram p = parseProgram(src, "t.dexlet");
  TypeEnv env;
  ValuePtr t = checkExpr(Capability::pure(), env, p.whole());
  CHECK(alphaEq(t, vArray(vFin(vInt(3)), tFloat())));

  NameSupply::reset();
  const char* src2 =
      "xs = [1.0, 2.0, 3.0]\n"
      "def f (x : Float) : Float = x * x\n"
      "g = grad f 3.0\n"
      "total = sum xs\n"
      "total + g\n";
  ElabProgram p2 = parseProgram(src2, "t.dexlet");
  CHECK(alphaEq(checkExpr(Capability::pure(), env, p2.whole()), tFloat()));
}
