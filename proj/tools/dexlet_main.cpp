#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <set>
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

struct Invocation {
  std::string command;
  std::string inputPath;
  std::string fnName;
  std::string pointText;
  std::string tangentText;
  std::vector<std::string> dumpStages;
  int chunks = 1;
  std::string outputFormat = "text";
};

std::string readFile(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) {
    fail(ErrCode::Parse, "cannot read input file '" + path + "'");
  }
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::string> splitStages(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

void validateStages(const Invocation& inv) {
  std::set<std::string> allowed = {"parsed", "core"};
  if (inv.command != "check") {
    allowed.insert("simplified");
    allowed.insert("optimized");
  }
  if (inv.command == "lin" || inv.command == "grad") allowed.insert("linearized");
  if (inv.command == "grad") allowed.insert("transposed");
  for (const auto& s : inv.dumpStages) {
    if (!allowed.count(s)) {
      fail(ErrCode::Parse, "dump stage '" + s + "' is not valid for the '" +
                               inv.command + "' command");
    }
  }
}

bool wantStage(const Invocation& inv, const char* stage) {
  for (const auto& s : inv.dumpStages) {
    if (s == stage) return true;
  }
  return false;
}

void dump(const char* stage, const std::string& text) {
  std::cout << "=== " << stage << " ===\n" << text << "\n";
}

nlohmann::json jsonOf(const RtPtr& v) {
  if (const auto* s = asRt<RScalar>(v)) return s->v;
  if (const auto* i = asRt<RIntVal>(v)) return i->v;
  if (asRt<RUnitVal>(v)) return nullptr;
  if (const auto* i = asRt<RIndexVal>(v)) return i->ord;
  if (const auto* t = asRt<RTable>(v)) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : t->elems) arr.push_back(jsonOf(e));
    return arr;
  }
  if (const auto* p = asRt<RPairVal>(v)) {
    return nlohmann::json::array({jsonOf(p->l), jsonOf(p->r)});
  }
  if (const auto* s = asRt<RSumVal>(v)) {
    return nlohmann::json{{"tag", s->isLeft ? "left" : "right"},
                          {"value", jsonOf(s->payload)}};
  }
  return printResult(v);
}

void printFinal(const Invocation& inv, const RtPtr& v) {
  std::cout << "=== result ===\n";
  if (inv.outputFormat == "json") {
    std::cout << jsonOf(v).dump() << "\n";
  } else {
    std::cout << printResult(v) << "\n";
  }
}

ExprPtr nestDecls(const ElabProgram& p, ExprPtr finalE) {
  for (auto it = p.decls.rbegin(); it != p.decls.rend(); ++it) {
    finalE = eLet(it->binder, nullptr, it->bound, std::move(finalE), it->span);
  }
  return finalE;
}

// Types every declaration in order so later lookups see authoritative types.
TypeEnv declEnv(const ElabProgram& p) {
  TypeEnv env;
  for (const auto& d : p.decls) {
    ValuePtr t = checkExpr(Capability::pure(), env, d.bound);
    env.bind(d.binder, t);
  }
  return env;
}

struct NamedFn {
  Name binder;
  ValuePtr dom;
  const VLam* lam;
  ValuePtr lamHold;  // keeps *lam alive
};

NamedFn resolveFn(const ElabProgram& p, TypeEnv& env, const std::string& fnName) {
  const ElabDecl* d = p.find(fnName);
  if (!d) fail(ErrCode::UnboundVariable, "no definition named '" + fnName + "'");
  ValuePtr t = env.lookup(d->binder);
  const auto* arrow = as<VArrow>(t);
  if (!arrow) {
    fail(ErrCode::Type, "'" + fnName + "' has type " + printValue(t) +
                            "; a unary function is required");
  }
  const auto* ret = as<ERet>(d->bound);
  const auto* lam = ret ? as<VLam>(ret->value) : nullptr;
  if (!lam) {
    fail(ErrCode::Type, "'" + fnName + "' is not bound to a function literal");
  }
  return NamedFn{d->binder, arrow->dom, lam, ret->value};
}

// Simplifies the function body at a fresh argument name and emits the
// forward-mode pass; shared by the linearized and transposed dumps.
ExprPtr linearizedIr(TypeEnv& env, const NamedFn& fn, Name& xOut) {
  xOut = NameSupply::fresh("x");
  env.bind(xOut, fn.dom);
  ExprPtr body = substExpr(fn.lam->body, fn.lam->binder, vVar(xOut));
  SimplResult sr = simplify(env, body);
  ExprPtr simple = contextFill(sr.ctx, eRet(sr.residual));
  return linearizeReify(env, xOut, fn.dom, simple);
}

ExprPtr transposedIr(TypeEnv& env, const ExprPtr& linIr) {
  SimplResult sr = simplify(env, linIr);
  for (const auto& b : sr.ctx.bindings) env.bind(b.binder, b.annot);
  const auto* pair = as<VPair>(sr.residual);
  ValuePtr tanHold = pair ? refreshBinders(pair->r) : nullptr;
  const auto* tanLam = as<VLam>(tanHold);
  if (!tanLam) {
    fail(ErrCode::Internal, "linearized code did not produce a tangent function");
  }
  env.bind(tanLam->binder, tanLam->annot);
  SimplResult rb = simplify(env, tanLam->body);
  ExprPtr simplBody = contextFill(rb.ctx, eRet(rb.residual));
  return transposeTop(env, tanLam->binder, tanLam->annot, simplBody, vFloat(1.0));
}

int runCommand(const Invocation& inv) {
  std::string source = readFile(inv.inputPath);
  validateStages(inv);
  if (inv.chunks < 1) fail(ErrCode::Parse, "--chunks must be at least 1");

  NameSupply::reset();
  ElabProgram p = parseProgram(source, inv.inputPath);
  if (wantStage(inv, "parsed")) dump("parsed", printExpr(p.whole()));

  TypeEnv env;
  ValuePtr ty = checkExpr(Capability::pure(), env, p.whole());
  if (wantStage(inv, "core")) dump("core", printExpr(p.whole()));

  if (inv.command == "check") {
    std::cout << "=== result ===\n" << printValue(ty) << "\n";
    return 0;
  }

  EvalOptions opts;
  opts.chunks = inv.chunks;

  if (inv.command == "simplify" || inv.command == "run") {
    ExprPtr s = simplifyExpr(p.whole());
    if (wantStage(inv, "simplified")) dump("simplified", printExpr(s));
    ExprPtr o = optimize(s);
    if (wantStage(inv, "optimized")) dump("optimized", printExpr(o));
    if (inv.command == "simplify") {
      std::cout << "=== result ===\n" << printExpr(s) << "\n";
      return 0;
    }
    printFinal(inv, evalExpr(nullptr, o, opts));
    return 0;
  }

  // lin and grad work on one named unary definition at a literal point.
  TypeEnv denv = declEnv(p);
  NamedFn fn = resolveFn(p, denv, inv.fnName);
  ValuePtr pt = parseValueLiteral(inv.pointText, fn.dom);

  if (wantStage(inv, "linearized") || wantStage(inv, "transposed")) {
    TypeEnv scratch = denv;
    Name x;
    ExprPtr linIr = linearizedIr(scratch, fn, x);
    if (wantStage(inv, "linearized")) dump("linearized", printExpr(linIr));
    if (wantStage(inv, "transposed")) {
      dump("transposed", printExpr(transposedIr(scratch, linIr)));
    }
  }

  Name pr = NameSupply::fresh("pr");
  ExprPtr finalE;
  if (inv.command == "lin") {
    // Prints (f point, df tangent); the tangent defaults to the point.
    ValuePtr tan = parseValueLiteral(
        inv.tangentText.empty() ? inv.pointText : inv.tangentText,
        tangentType(fn.dom));
    Name y = NameSupply::fresh("y");
    Name df = NameSupply::fresh("df");
    Name dy = NameSupply::fresh("dy");
    finalE = eLet(
        pr, nullptr, eLinearize(vVar(fn.binder), pt),
        eLet(y, nullptr, eFst(vVar(pr)),
             eLet(df, nullptr, eSnd(vVar(pr)),
                  eLet(dy, nullptr, eApp(vVar(df), tan),
                       eRet(vPair(vVar(y), vVar(dy)))))));
  } else {
    Name df = NameSupply::fresh("df");
    Name g = NameSupply::fresh("g");
    finalE = eLet(
        pr, nullptr, eLinearize(vVar(fn.binder), pt),
        eLet(df, nullptr, eSnd(vVar(pr)),
             eLet(g, nullptr, eTranspose(vVar(df), vFloat(1.0)), eRet(vVar(g)))));
  }
  ExprPtr whole = nestDecls(p, std::move(finalE));
  TypeEnv fresh;
  checkExpr(Capability::pure(), fresh, whole);
  ExprPtr s = simplifyExpr(whole);
  if (wantStage(inv, "simplified")) dump("simplified", printExpr(s));
  ExprPtr o = optimize(s);
  if (wantStage(inv, "optimized")) dump("optimized", printExpr(o));
  printFinal(inv, evalExpr(nullptr, o, opts));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compiler and interpreter for .dexlet array programs"};
  app.require_subcommand(1);

  Invocation inv;
  std::string dumpArg;

  auto addCommon = [&](CLI::App* sub) {
    sub->add_option("file", inv.inputPath, "input .dexlet file")->required();
    sub->add_option("--dump-ir", dumpArg,
                    "comma-separated IR stages to print");
    sub->add_option("--chunks", inv.chunks, "parallel chunk count");
    sub->add_option("--output", inv.outputFormat, "result format: text or json");
  };

  addCommon(app.add_subcommand("check", "parse and typecheck"));
  addCommon(app.add_subcommand("simplify", "typecheck and simplify"));
  CLI::App* lin = app.add_subcommand("lin", "linearize a definition at a point");
  addCommon(lin);
  lin->add_option("fn", inv.fnName, "definition name")->required();
  lin->add_option("point", inv.pointText, "literal argument")->required();
  lin->add_option("tangent", inv.tangentText,
                  "literal tangent (defaults to the point)");
  CLI::App* grad = app.add_subcommand("grad", "gradient of a definition at a point");
  addCommon(grad);
  grad->add_option("fn", inv.fnName, "definition name")->required();
  grad->add_option("point", inv.pointText, "literal argument")->required();
  addCommon(app.add_subcommand("run", "simplify, optimize, and evaluate"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 1 : 0;
  }

  inv.command = app.get_subcommands().front()->get_name();
  inv.dumpStages = splitStages(dumpArg);

  std::string source;
  try {
    return runCommand(inv);
  } catch (const DexError& e) {
    std::ifstream in(inv.inputPath);
    std::ostringstream src;
    if (in.good()) src << in.rdbuf();
    std::cerr << e.render(inv.inputPath, src.str()) << "\n";
    return isUserError(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << inv.inputPath << ": error[E-internal]: " << e.what() << "\n";
    return 2;
  }
}
