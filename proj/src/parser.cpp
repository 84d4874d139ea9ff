#include "simtforge/parser.hpp"

#include <cctype>
#include <unordered_map>
#include <unordered_set>

namespace simtforge {

namespace {

struct Token {
  enum class Kind { Ident, Value, Label, Func, Int, Punct, End };
  Kind kind = Kind::End;
  std::string text;  // Ident/Value/Label/Func: bare name; Punct: the character
  int64_t ival = 0;
  int line = 1, col = 1;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : src_(text) { advance(); }

  const Token& peek() const { return tok_; }
  Token take() {
    Token t = tok_;
    advance();
    return t;
  }

 private:
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  void advance() {
    while (pos_ < src_.size()) {
      char c = src_[pos_];
      if (c == '#') {
        while (pos_ < src_.size() && src_[pos_] != '\n') ++pos_;
        continue;
      }
      if (c == '\n') {
        ++pos_;
        ++line_;
        col_ = 1;
        continue;
      }
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
        ++col_;
        continue;
      }
      break;
    }
    tok_.line = line_;
    tok_.col = col_;
    if (pos_ >= src_.size()) {
      tok_.kind = Token::Kind::End;
      tok_.text.clear();
      return;
    }
    char c = src_[pos_];
    if (c == '%' || c == '^' || c == '@') {
      size_t start = pos_ + 1;
      size_t end = start;
      while (end < src_.size() && ident_char(src_[end])) ++end;
      tok_.kind = c == '%' ? Token::Kind::Value
                           : (c == '^' ? Token::Kind::Label : Token::Kind::Func);
      tok_.text = src_.substr(start, end - start);
      step(end - pos_);
      return;
    }
    if (c == '-' || std::isdigit(static_cast<unsigned char>(c))) {
      size_t end = pos_ + 1;
      while (end < src_.size() && std::isdigit(static_cast<unsigned char>(src_[end])))
        ++end;
      tok_.kind = Token::Kind::Int;
      tok_.text = src_.substr(pos_, end - pos_);
      tok_.ival = std::stoll(tok_.text);
      step(end - pos_);
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
      size_t end = pos_ + 1;
      while (end < src_.size() && ident_char(src_[end])) ++end;
      tok_.kind = Token::Kind::Ident;
      tok_.text = src_.substr(pos_, end - pos_);
      step(end - pos_);
      return;
    }
    tok_.kind = Token::Kind::Punct;
    tok_.text = std::string(1, c);
    step(1);
  }

  void step(size_t n) {
    pos_ += n;
    col_ += static_cast<int>(n);
  }

  const std::string& src_;
  size_t pos_ = 0;
  int line_ = 1, col_ = 1;
  Token tok_;
};

struct ParseAbort {};

class Parser {
 public:
  explicit Parser(const std::string& text) : lex_(text) {}

  ParseResult run() {
    ParseResult res;
    try {
      res.module = parse_module_body();
    } catch (const ParseAbort&) {
      res.module.reset();
      res.error = err_;
    }
    return res;
  }

 private:
  [[noreturn]] void fail(const Token& at, const std::string& msg) {
    err_ = {at.line, at.col, msg};
    throw ParseAbort{};
  }

  Token expect_punct(const std::string& p) {
    Token t = lex_.take();
    if (t.kind != Token::Kind::Punct || t.text != p)
      fail(t, "expected '" + p + "'");
    return t;
  }

  Token expect_value(const char* what = "value operand") {
    Token t = lex_.take();
    if (t.kind != Token::Kind::Value) fail(t, std::string("expected ") + what);
    return t;
  }

  Token expect_label() {
    Token t = lex_.take();
    if (t.kind != Token::Kind::Label) fail(t, "expected block label operand");
    return t;
  }

  Token expect_int() {
    Token t = lex_.take();
    if (t.kind != Token::Kind::Int) fail(t, "expected integer literal");
    return t;
  }

  bool peek_punct(const std::string& p) {
    return lex_.peek().kind == Token::Kind::Punct && lex_.peek().text == p;
  }

  bool peek_ident(const std::string& s) {
    return lex_.peek().kind == Token::Kind::Ident && lex_.peek().text == s;
  }

  Module parse_module_body() {
    Module m;
    if (peek_ident(".stage")) {
      lex_.take();
      Token t = lex_.take();
      if (t.kind != Token::Kind::Ident || (t.text != "high" && t.text != "lowered"))
        fail(t, "expected 'high' or 'lowered'");
      m.stage = t.text == "high" ? Stage::High : Stage::Lowered;
    }
    while (lex_.peek().kind != Token::Kind::End) {
      m.functions.push_back(parse_function());
    }
    if (m.functions.empty()) {
      Token t = lex_.peek();
      fail(t, "empty module");
    }
    return m;
  }

  Function parse_function() {
    Function f;
    Token t = lex_.take();
    if (t.kind != Token::Kind::Ident) fail(t, "expected 'kernel' or 'func'");
    if (t.text == "kernel") {
      f.is_kernel = true;
      f.linkage = Linkage::External;
    } else if (t.text == "func") {
      f.linkage = Linkage::External;
    } else if (t.text == "internal") {
      Token t2 = lex_.take();
      if (t2.kind != Token::Kind::Ident || t2.text != "func")
        fail(t2, "expected 'func' after 'internal'");
      f.linkage = Linkage::Internal;
    } else {
      fail(t, "expected 'kernel' or 'func', got '" + t.text + "'");
    }
    Token name = lex_.take();
    if (name.kind != Token::Kind::Func) fail(name, "expected '@' function name");
    f.name = name.text;

    expect_punct("(");
    if (!peek_punct(")")) {
      for (;;) {
        Param p;
        Token v = expect_value("parameter name");
        p.name = v.text;
        expect_punct(":");
        Token ty = lex_.take();
        if (ty.kind != Token::Kind::Ident) fail(ty, "expected parameter type");
        if (ty.text == "i32") p.type = ValueType::I32;
        else if (ty.text == "i1") p.type = ValueType::I1;
        else if (ty.text == "addr") p.type = ValueType::Addr;
        else fail(ty, "unknown type '" + ty.text + "'");
        if (peek_ident("uniform")) {
          lex_.take();
          p.uniform_flag = true;
        }
        f.params.push_back(p);
        if (peek_punct(",")) {
          lex_.take();
          continue;
        }
        break;
      }
    }
    expect_punct(")");
    expect_punct("{");

    while (!peek_punct("}")) {
      f.blocks.push_back(parse_block(f));
    }
    expect_punct("}");

    if (f.blocks.empty()) fail(lex_.peek(), "function @" + f.name + " has no blocks");
    check_function(f);
    return f;
  }

  Block parse_block(const Function& f) {
    Block b;
    Token lbl = lex_.take();
    if (lbl.kind != Token::Kind::Ident) fail(lbl, "expected block label");
    expect_punct(":");
    b.label = lbl.text;
    for (auto& prev : f.blocks)
      if (prev.label == b.label) fail(lbl, "duplicate label '" + b.label + "'");

    bool terminated = false;
    while (!terminated) {
      if (peek_punct("}")) fail(lex_.peek(), "block '" + b.label + "' lacks a terminator");
      Instruction ins = parse_instruction();
      if (is_terminator(ins.op)) {
        b.term = ins;
        terminated = true;
      } else if (ins.op == Opcode::Phi) {
        if (!b.body.empty())
          fail(lex_.peek(), "phi after non-phi instruction in block '" + b.label + "'");
        b.phis.push_back(ins);
      } else {
        b.body.push_back(ins);
      }
    }
    return b;
  }

  Instruction parse_instruction() {
    Instruction ins;
    Token first = lex_.take();
    ins.line = first.line;

    std::string result;
    Token opTok = first;
    if (first.kind == Token::Kind::Value) {
      result = first.text;
      Token eq = lex_.take();
      if (eq.kind != Token::Kind::Punct || eq.text != "=") fail(eq, "expected '='");
      opTok = lex_.take();
    }
    if (opTok.kind != Token::Kind::Ident) fail(opTok, "expected opcode");
    const std::string& op = opTok.text;
    ins.result = result;

    auto need_result = [&](bool yes) {
      if (yes && result.empty()) fail(opTok, "'" + op + "' produces a result");
      if (!yes && !result.empty()) fail(opTok, "'" + op + "' produces no result");
    };

    static const std::unordered_map<std::string, Opcode> bin = {
        {"add", Opcode::Add}, {"sub", Opcode::Sub}, {"mul", Opcode::Mul},
        {"udiv", Opcode::Udiv}, {"and", Opcode::And}, {"or", Opcode::Or},
        {"xor", Opcode::Xor}, {"shl", Opcode::Shl}, {"shr", Opcode::Shr}};
    static const std::unordered_map<std::string, Opcode> nullary = {
        {"tid", Opcode::Tid}, {"ntid", Opcode::Ntid}, {"wid", Opcode::Wid},
        {"nwid", Opcode::Nwid}, {"coreid", Opcode::Coreid},
        {"activemask", Opcode::Activemask}};
    static const std::unordered_map<std::string, IcmpPred> preds = {
        {"eq", IcmpPred::Eq}, {"ne", IcmpPred::Ne}, {"slt", IcmpPred::Slt},
        {"sle", IcmpPred::Sle}, {"sgt", IcmpPred::Sgt}, {"sge", IcmpPred::Sge},
        {"ult", IcmpPred::Ult}};

    if (auto it = bin.find(op); it != bin.end()) {
      need_result(true);
      ins.op = it->second;
      ins.operands.push_back(Operand::value(expect_value().text));
      expect_punct(",");
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (auto it = nullary.find(op); it != nullary.end()) {
      need_result(true);
      ins.op = it->second;
      return ins;
    }
    if (op == "const") {
      need_result(true);
      ins.op = Opcode::Const;
      ins.operands.push_back(Operand::imm_of(expect_int().ival));
      return ins;
    }
    if (op == "icmp") {
      need_result(true);
      ins.op = Opcode::Icmp;
      Token p = lex_.take();
      if (p.kind != Token::Kind::Ident || !preds.count(p.text))
        fail(p, "unknown icmp predicate");
      ins.icmp = preds.at(p.text);
      ins.operands.push_back(Operand::value(expect_value().text));
      expect_punct(",");
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (op == "select" || op == "cmov") {
      need_result(true);
      ins.op = op == "select" ? Opcode::Select : Opcode::Cmov;
      for (int i = 0; i < 3; ++i) {
        ins.operands.push_back(Operand::value(expect_value().text));
        if (i < 2) expect_punct(",");
      }
      return ins;
    }
    if (op == "phi") {
      need_result(true);
      ins.op = Opcode::Phi;
      for (;;) {
        expect_punct("[");
        ins.operands.push_back(Operand::value(expect_value().text));
        expect_punct(",");
        ins.operands.push_back(Operand::label(expect_label().text));
        expect_punct("]");
        if (peek_punct(",")) {
          lex_.take();
          continue;
        }
        if (peek_punct("[")) continue;
        break;
      }
      return ins;
    }
    if (op == "load") {
      need_result(true);
      ins.op = Opcode::Load;
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (op == "store") {
      need_result(false);
      ins.op = Opcode::Store;
      ins.operands.push_back(Operand::value(expect_value().text));
      expect_punct(",");
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (op == "addr.add" || op == "atomic_add" || op == "shfl") {
      need_result(true);
      ins.op = op == "addr.add" ? Opcode::AddrAdd
                                : (op == "atomic_add" ? Opcode::AtomicAdd : Opcode::Shfl);
      ins.operands.push_back(Operand::value(expect_value().text));
      expect_punct(",");
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (op == "vote.all" || op == "vote.any" || op == "vote.ballot") {
      need_result(true);
      ins.op = op == "vote.all" ? Opcode::VoteAll
                                : (op == "vote.any" ? Opcode::VoteAny : Opcode::VoteBallot);
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (op == "call") {
      ins.op = Opcode::Call;
      Token fn = lex_.take();
      if (fn.kind != Token::Kind::Func) fail(fn, "expected '@' callee");
      ins.operands.push_back(Operand::func(fn.text));
      expect_punct("(");
      if (!peek_punct(")")) {
        for (;;) {
          ins.operands.push_back(Operand::value(expect_value().text));
          if (peek_punct(",")) {
            lex_.take();
            continue;
          }
          break;
        }
      }
      expect_punct(")");
      return ins;
    }
    if (op == "assume_uniform") {
      need_result(false);
      ins.op = Opcode::AssumeUniform;
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (op == "barrier") {
      need_result(false);
      ins.op = Opcode::Barrier;
      ins.operands.push_back(Operand::imm_of(expect_int().ival));
      expect_punct(",");
      ins.operands.push_back(Operand::imm_of(expect_int().ival));
      return ins;
    }
    if (op == "split" || op == "split.neg") {
      need_result(true);
      ins.op = Opcode::Split;
      ins.negate = op == "split.neg";
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (op == "join") {
      need_result(false);
      ins.op = Opcode::Join;
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (op == "pred") {
      need_result(false);
      ins.op = Opcode::Pred;
      ins.operands.push_back(Operand::value(expect_value().text));
      expect_punct(",");
      ins.operands.push_back(Operand::value(expect_value().text));
      expect_punct(",");
      ins.operands.push_back(Operand::label(expect_label().text));
      expect_punct(",");
      ins.operands.push_back(Operand::label(expect_label().text));
      return ins;
    }
    if (op == "tmc") {
      need_result(false);
      ins.op = Opcode::Tmc;
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (op == "wspawn") {
      need_result(false);
      ins.op = Opcode::Wspawn;
      ins.operands.push_back(Operand::value(expect_value().text));
      expect_punct(",");
      Token fn = lex_.take();
      if (fn.kind != Token::Kind::Func) fail(fn, "expected '@' function");
      ins.operands.push_back(Operand::func(fn.text));
      return ins;
    }
    if (op == "mov") {
      need_result(true);
      ins.op = Opcode::Mov;
      ins.operands.push_back(Operand::value(expect_value().text));
      return ins;
    }
    if (op == "br") {
      need_result(false);
      Token t = lex_.take();
      if (t.kind == Token::Kind::Label) {
        ins.op = Opcode::Br;
        ins.operands.push_back(Operand::label(t.text));
        return ins;
      }
      if (t.kind == Token::Kind::Value) {
        ins.op = Opcode::CondBr;
        ins.operands.push_back(Operand::value(t.text));
        expect_punct(",");
        ins.operands.push_back(Operand::label(expect_label().text));
        expect_punct(",");
        ins.operands.push_back(Operand::label(expect_label().text));
        return ins;
      }
      fail(t, "expected branch target or condition");
    }
    if (op == "ret") {
      need_result(false);
      ins.op = Opcode::Ret;
      if (lex_.peek().kind == Token::Kind::Value) {
        ins.operands.push_back(Operand::value(lex_.take().text));
      }
      return ins;
    }
    fail(opTok, "unknown opcode '" + op + "'");
  }

  // Parse-time sanity: every value operand must have a definition other than
  // the instruction using it; labels must exist. Dominance and SSA discipline
  // are the verifier's job.
  void check_function(const Function& f) {
    std::unordered_set<std::string> labels;
    for (auto& b : f.blocks) labels.insert(b.label);
    // count defs per name
    std::unordered_map<std::string, int> defs;
    for (auto& p : f.params) defs[p.name] += 1;
    for_each_instruction(f, [&](const Instruction& i) {
      if (i.has_result()) defs[i.result] += 1;
    });
    for (auto& b : f.blocks) {
      auto check_ins = [&](const Instruction& i) {
        for (auto& o : i.operands) {
          if (o.kind == Operand::Kind::Value) {
            int n = defs.count(o.name) ? defs.at(o.name) : 0;
            bool self_only = i.has_result() && i.result == o.name && n == 1;
            if (n == 0 || self_only) {
              err_ = {i.line, 1, "undefined value '%" + o.name + "'"};
              throw ParseAbort{};
            }
          } else if (o.kind == Operand::Kind::Label) {
            if (!labels.count(o.name)) {
              err_ = {i.line, 1, "unknown label '^" + o.name + "'"};
              throw ParseAbort{};
            }
          }
        }
      };
      for_each_instruction(b, check_ins);
    }
  }

  Lexer lex_;
  ParseError err_;
};

}  // namespace

ParseResult parse_module(const std::string& text) { return Parser(text).run(); }

}  // namespace simtforge
