#include "cirlab/text.hpp"

#include <cctype>
#include <charconv>
#include <set>
#include <sstream>

#include "cirlab/error.hpp"
#include "cirlab/validate.hpp"

namespace cirlab {

namespace {

enum class Tok : std::uint8_t { Ident, Int, Punct, End };

struct Token {
  Tok kind = Tok::End;
  std::string text;
  std::int64_t value = 0;
  int line = 1;
  int column = 1;
};

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1;
  int col = 1;
  std::size_t i = 0;
  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n; ++k) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
      ++i;
    }
  };
  auto ident_start = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; };
  auto ident_char = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '$';
  };
  while (i < src.size()) {
    char c = src[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      advance(1);
      continue;
    }
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
      while (i < src.size() && src[i] != '\n') advance(1);
      continue;
    }
    Token t;
    t.line = line;
    t.column = col;
    if (ident_start(c)) {
      std::size_t j = i;
      while (j < src.size() && ident_char(src[j])) ++j;
      t.kind = Tok::Ident;
      t.text = std::string(src.substr(i, j - i));
      advance(j - i);
    } else if (std::isdigit(static_cast<unsigned char>(c)) ||
               (c == '-' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
      std::size_t j = i + 1;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      t.kind = Tok::Int;
      t.text = std::string(src.substr(i, j - i));
      auto [ptr, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.value);
      if (ec != std::errc()) throw ParseError("integer literal out of range: " + t.text, line, col);
      advance(j - i);
    } else if (std::string_view("{}(),:=;@").find(c) != std::string_view::npos) {
      t.kind = Tok::Punct;
      t.text = std::string(1, c);
      advance(1);
    } else {
      throw ParseError(std::string("unexpected character '") + c + "'", line, col);
    }
    out.push_back(std::move(t));
  }
  Token end;
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

const std::set<std::string, std::less<>>& reserved_words() {
  static const std::set<std::string, std::less<>> words = [] {
    std::set<std::string, std::less<>> w = {"br",    "cbr",  "return", "true",   "false",  "null",
                                             "const", "class", "fn",    "thread", "global", "extends"};
    for (std::size_t i = 0; i < kOpcodeCount; ++i) {
      auto op = static_cast<Opcode>(i);
      if (op != Opcode::Binary) w.insert(std::string(opcode_name(op)));
    }
    for (std::size_t i = 0; i <= static_cast<std::size_t>(BinaryOp::CmpNe); ++i) {
      w.insert(std::string(binary_op_name(static_cast<BinaryOp>(i))));
    }
    return w;
  }();
  return words;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(lex(src)) {}

  Program parse() {
    Program p;
    while (!at_end()) {
      const Token& t = peek();
      if (is_ident("class")) {
        p.classes.push_back(parse_class());
      } else if (is_ident("global")) {
        p.globals.push_back(parse_global());
      } else if (is_ident("fn")) {
        p.functions.push_back(parse_function());
      } else if (is_ident("thread")) {
        p.threads.push_back(parse_thread());
      } else {
        fail("expected 'class', 'global', 'fn' or 'thread', found '" + t.text + "'", t);
      }
    }
    return p;
  }

 private:
  std::vector<Token> toks_;
  std::size_t pos_ = 0;

  const Token& peek(std::size_t ahead = 0) const {
    std::size_t k = std::min(pos_ + ahead, toks_.size() - 1);
    return toks_[k];
  }
  bool at_end() const { return peek().kind == Tok::End; }
  const Token& next() {
    const Token& t = toks_[pos_];
    if (pos_ + 1 < toks_.size()) ++pos_;
    return t;
  }
  [[noreturn]] void fail(const std::string& msg, const Token& at) const {
    throw ParseError(msg, at.line, at.column);
  }
  bool is_punct(char c, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Tok::Punct && t.text[0] == c;
  }
  bool is_ident(std::string_view word, std::size_t ahead = 0) const {
    const Token& t = peek(ahead);
    return t.kind == Tok::Ident && t.text == word;
  }
  void expect_punct(char c) {
    if (!is_punct(c)) fail(std::string("expected '") + c + "', found '" + peek().text + "'", peek());
    next();
  }
  bool accept_punct(char c) {
    if (!is_punct(c)) return false;
    next();
    return true;
  }
  void expect_word(std::string_view w) {
    if (!is_ident(w)) fail("expected '" + std::string(w) + "', found '" + peek().text + "'", peek());
    next();
  }
  std::string expect_ident(std::string_view what) {
    const Token& t = peek();
    if (t.kind != Tok::Ident) fail("expected " + std::string(what) + ", found '" + t.text + "'", t);
    next();
    return t.text;
  }
  std::string expect_name(std::string_view what) {
    const Token& t = peek();
    std::string s = expect_ident(what);
    if (reserved_words().count(s) != 0) fail("'" + s + "' is a reserved word", t);
    return s;
  }
  std::int64_t expect_int() {
    const Token& t = peek();
    if (t.kind != Tok::Int) fail("expected integer, found '" + t.text + "'", t);
    next();
    return t.value;
  }

  std::vector<std::string> ident_list() {
    std::vector<std::string> out;
    out.push_back(expect_name("identifier"));
    while (accept_punct(',')) out.push_back(expect_name("identifier"));
    return out;
  }

  ClassDef parse_class() {
    expect_word("class");
    ClassDef c;
    c.name = expect_name("class name");
    if (is_ident("extends")) {
      next();
      c.superclass = expect_name("superclass name");
    }
    expect_punct('{');
    while (!is_punct('}')) {
      if (is_ident("fields")) {
        next();
        if (!is_punct(';')) {
          auto f = ident_list();
          c.fields.insert(c.fields.end(), f.begin(), f.end());
        }
      } else if (is_ident("methods")) {
        next();
        if (!is_punct(';')) {
          auto m = ident_list();
          c.methods.insert(c.methods.end(), m.begin(), m.end());
        }
      } else {
        fail("expected 'fields' or 'methods'", peek());
      }
      accept_punct(';');
    }
    expect_punct('}');
    return c;
  }

  GlobalDef parse_global() {
    expect_word("global");
    GlobalDef g;
    g.name = expect_name("global name");
    expect_punct('=');
    if (is_ident("new")) {
      next();
      g.class_name = expect_name("class name");
    } else if (is_ident("newarray")) {
      next();
      g.array_length = expect_int();
      if (g.array_length < 0) fail("negative array length", peek());
    } else {
      fail("expected 'new' or 'newarray'", peek());
    }
    accept_punct(';');
    return g;
  }

  ThreadSpec parse_thread() {
    expect_word("thread");
    ThreadSpec t;
    t.function = expect_name("function name");
    expect_punct('(');
    if (!is_punct(')')) {
      t.args.push_back(operand());
      while (accept_punct(',')) t.args.push_back(operand());
    }
    expect_punct(')');
    accept_punct(';');
    for (const auto& a : t.args) {
      if (a.is_value()) fail("thread arguments must be literals or globals", peek());
    }
    return t;
  }

  Function parse_function() {
    expect_word("fn");
    Function f;
    f.name = expect_name("function name");
    expect_punct('(');
    if (!is_punct(')')) f.params = ident_list();
    expect_punct(')');
    expect_punct('{');
    while (!is_punct('}')) {
      if (at_end()) fail("unterminated function body", peek());
      f.blocks.push_back(parse_block());
    }
    expect_punct('}');
    return f;
  }

  bool at_block_end() const {
    if (is_punct('}') || at_end()) return true;
    // A label is a non-reserved identifier followed by ':' or a parameter list.
    const Token& t = peek();
    if (t.kind != Tok::Ident || reserved_words().count(t.text) != 0) return false;
    return is_punct(':', 1) || is_punct('(', 1);
  }

  BasicBlock parse_block() {
    BasicBlock b;
    b.label = expect_name("block label");
    if (accept_punct('(')) {
      if (!is_punct(')')) b.params = ident_list();
      expect_punct(')');
    }
    expect_punct(':');
    while (!at_block_end()) {
      if (is_ident("br") || is_ident("cbr") || is_ident("return")) {
        b.term = parse_terminator();
        accept_punct(';');
        break;
      }
      b.instrs.push_back(parse_instruction());
      accept_punct(';');
    }
    return b;
  }

  Operand operand() {
    const Token& t = peek();
    if (t.kind == Tok::Int) {
      next();
      return Operand::integer(t.value);
    }
    if (is_punct('@')) {
      next();
      return Operand::global(expect_name("global name"));
    }
    if (t.kind != Tok::Ident) fail("expected operand, found '" + t.text + "'", t);
    if (t.text == "true") {
      next();
      return Operand::boolean(true);
    }
    if (t.text == "false") {
      next();
      return Operand::boolean(false);
    }
    if (t.text == "null") {
      next();
      return Operand::null();
    }
    if (t.text == "const") {
      next();
      Operand lit = operand();
      if (!lit.is_immediate()) fail("'const' requires a literal", t);
      return lit;
    }
    return Operand::value(expect_name("value name"));
  }

  std::vector<Operand> call_args() {
    std::vector<Operand> args;
    expect_punct('(');
    if (!is_punct(')')) {
      args.push_back(operand());
      while (accept_punct(',')) args.push_back(operand());
    }
    expect_punct(')');
    return args;
  }

  void field_ref(Instruction& in) {
    const Token& t = peek();
    std::string ref = expect_ident("field reference");
    auto dot = ref.rfind('.');
    if (dot == std::string::npos || dot == 0 || dot + 1 == ref.size()) {
      fail("field reference must be written Class.field", t);
    }
    in.symbol = ref.substr(0, dot);
    in.field = ref.substr(dot + 1);
  }

  BranchTarget target() {
    BranchTarget t;
    t.label = expect_name("block label");
    if (is_punct('(')) t.args = call_args();
    return t;
  }

  Terminator parse_terminator() {
    if (is_ident("br")) {
      next();
      return Terminator::br(target());
    }
    if (is_ident("cbr")) {
      next();
      Operand c = operand();
      expect_punct(',');
      BranchTarget t = target();
      expect_punct(',');
      BranchTarget f = target();
      return Terminator::cond_br(std::move(c), std::move(t), std::move(f));
    }
    expect_word("return");
    bool paren = accept_punct('(');
    std::optional<Operand> value;
    bool value_follows = paren ? !is_punct(')') : !at_block_end() && !is_punct(';');
    if (value_follows) value = operand();
    if (paren) expect_punct(')');
    return Terminator::ret(std::move(value));
  }

  Instruction parse_instruction() {
    Instruction in;
    if (peek().kind == Tok::Ident && is_punct('=', 1)) {
      in.result = expect_name("result name");
      expect_punct('=');
    }
    const Token& op_tok = peek();
    std::string op = expect_ident("opcode");

    if (auto bop = binary_op_from_name(op)) {
      in.op = Opcode::Binary;
      in.binop = *bop;
      operands(in, 2);
      return finish(in, op_tok, true);
    }
    auto code = opcode_from_name(op);
    if (!code) fail("unknown opcode '" + op + "'", op_tok);
    in.op = *code;
    switch (in.op) {
      case Opcode::Const: {
        bool paren = accept_punct('(');
        Operand lit = operand();
        if (!lit.is_immediate()) fail("'const' requires a literal", op_tok);
        in.operands.push_back(lit);
        if (paren) expect_punct(')');
        return finish(in, op_tok, true);
      }
      case Opcode::Mov:
      case Opcode::NewArray:
      case Opcode::ArrayLength:
        operands(in, 1);
        return finish(in, op_tok, true);
      case Opcode::Select:
        operands(in, 3);
        return finish(in, op_tok, true);
      case Opcode::ArrayLoad:
        operands(in, 2);
        return finish(in, op_tok, true);
      case Opcode::ArrayStore:
        operands(in, 3);
        return finish(in, op_tok, false);
      case Opcode::New:
      case Opcode::HandleConst: {
        bool paren = accept_punct('(');
        in.symbol = expect_name(in.op == Opcode::New ? "class name" : "function name");
        if (paren) expect_punct(')');
        return finish(in, op_tok, true);
      }
      case Opcode::GetField:
      case Opcode::PutField:
      case Opcode::Cas: {
        bool paren = accept_punct('(');
        in.operands.push_back(operand());
        expect_punct(',');
        field_ref(in);
        std::size_t extra = in.op == Opcode::GetField ? 0 : in.op == Opcode::PutField ? 1 : 2;
        for (std::size_t k = 0; k < extra; ++k) {
          expect_punct(',');
          in.operands.push_back(operand());
        }
        if (paren) expect_punct(')');
        return finish(in, op_tok, in.op != Opcode::PutField);
      }
      case Opcode::MonitorEnter:
      case Opcode::MonitorExit:
      case Opcode::Wait:
      case Opcode::Notify:
      case Opcode::NotifyAll:
      case Opcode::Unpark:
      case Opcode::Output:
        operands(in, 1);
        return finish(in, op_tok, false);
      case Opcode::Park:
        if (accept_punct('(')) expect_punct(')');
        return finish(in, op_tok, false);
      case Opcode::Guard: {
        bool paren = accept_punct('(');
        in.operands.push_back(operand());
        expect_punct(',');
        in.symbol = expect_name("guard reason");
        if (paren) expect_punct(')');
        return finish(in, op_tok, false);
      }
      case Opcode::InstanceOf: {
        bool paren = accept_punct('(');
        in.operands.push_back(operand());
        expect_punct(',');
        in.symbol = expect_name("class name");
        if (paren) expect_punct(')');
        return finish(in, op_tok, true);
      }
      case Opcode::Call:
        in.symbol = expect_name("function name");
        in.operands = call_args();
        return finish_optional(in);
      case Opcode::CallVirtual: {
        in.operands.push_back(operand());
        expect_punct(',');
        in.symbol = expect_name("method name");
        auto args = call_args();
        in.operands.insert(in.operands.end(), args.begin(), args.end());
        return finish_optional(in);
      }
      case Opcode::CallHandle: {
        in.operands.push_back(Operand::value(expect_name("handle value")));
        auto args = call_args();
        in.operands.insert(in.operands.end(), args.begin(), args.end());
        return finish_optional(in);
      }
      case Opcode::VectorBinary: {
        bool paren = accept_punct('(');
        const Token& bt = peek();
        auto bop = binary_op_from_name(expect_ident("vector operator"));
        if (!bop) fail("unknown vector operator", bt);
        in.binop = *bop;
        for (int k = 0; k < 4; ++k) {
          expect_punct(',');
          in.operands.push_back(operand());
        }
        expect_punct(',');
        in.width = expect_int();
        if (paren) expect_punct(')');
        return finish(in, op_tok, false);
      }
      case Opcode::Binary:
        break;
    }
    fail("unknown opcode '" + op + "'", op_tok);
  }

  void operands(Instruction& in, std::size_t n) {
    bool paren = accept_punct('(');
    for (std::size_t k = 0; k < n; ++k) {
      if (k > 0) expect_punct(',');
      in.operands.push_back(operand());
    }
    if (paren) expect_punct(')');
  }

  Instruction finish(Instruction& in, const Token& at, bool produces) {
    if (produces && !in.has_result()) fail(std::string(opcode_name(in.op)) + " needs a result name", at);
    if (!produces && in.has_result()) fail(std::string(opcode_name(in.op)) + " produces no value", at);
    return std::move(in);
  }
  Instruction finish_optional(Instruction& in) { return std::move(in); }
};

void print_operands(std::ostringstream& os, const std::vector<Operand>& ops, std::size_t from = 0) {
  for (std::size_t i = from; i < ops.size(); ++i) {
    if (i > from) os << ", ";
    os << print_operand(ops[i]);
  }
}

void print_target(std::ostringstream& os, const BranchTarget& t) {
  os << t.label;
  if (!t.args.empty()) {
    os << '(';
    print_operands(os, t.args);
    os << ')';
  }
}

} // namespace

Program parse_program_unresolved(std::string_view text) { return Parser(text).parse(); }

Program parse_program(std::string_view text) {
  Program p = parse_program_unresolved(text);
  for (const auto& d : validate(p)) {
    if (d.kind == Diagnostic::Kind::Resolution) throw ResolutionError(d.message);
  }
  return p;
}

std::string print_operand(const Operand& op) {
  switch (op.kind) {
    case Operand::Kind::Value:
      return op.name;
    case Operand::Kind::Int:
      return std::to_string(op.imm);
    case Operand::Kind::Bool:
      return op.imm != 0 ? "true" : "false";
    case Operand::Kind::Null:
      return "null";
    case Operand::Kind::Global:
      return "@" + op.name;
  }
  return {};
}

std::string print_instruction(const Instruction& in) {
  std::ostringstream os;
  if (in.has_result()) os << in.result << " = ";
  switch (in.op) {
    case Opcode::Binary:
      os << binary_op_name(in.binop) << ' ';
      print_operands(os, in.operands);
      break;
    case Opcode::New:
    case Opcode::HandleConst:
      os << opcode_name(in.op) << ' ' << in.symbol;
      break;
    case Opcode::GetField:
    case Opcode::PutField:
    case Opcode::Cas:
      os << opcode_name(in.op) << ' ' << print_operand(in.operands[0]) << ", " << in.symbol << '.' << in.field;
      for (std::size_t i = 1; i < in.operands.size(); ++i) os << ", " << print_operand(in.operands[i]);
      break;
    case Opcode::Guard:
      os << "guard " << print_operand(in.operands[0]) << ", " << in.symbol;
      break;
    case Opcode::InstanceOf:
      os << "instanceof " << print_operand(in.operands[0]) << ", " << in.symbol;
      break;
    case Opcode::Park:
      os << "park";
      break;
    case Opcode::Call:
      os << "call " << in.symbol << '(';
      print_operands(os, in.operands);
      os << ')';
      break;
    case Opcode::CallVirtual:
      os << "callvirtual " << print_operand(in.operands[0]) << ", " << in.symbol << '(';
      print_operands(os, in.operands, 1);
      os << ')';
      break;
    case Opcode::CallHandle:
      os << "callhandle " << print_operand(in.operands[0]) << '(';
      print_operands(os, in.operands, 1);
      os << ')';
      break;
    case Opcode::VectorBinary:
      os << "vbinop " << binary_op_name(in.binop) << ", ";
      print_operands(os, in.operands);
      os << ", " << in.width;
      break;
    default:
      os << opcode_name(in.op);
      if (!in.operands.empty()) {
        os << ' ';
        print_operands(os, in.operands);
      }
      break;
  }
  return os.str();
}

std::string print_function(const Function& fn) {
  std::ostringstream os;
  os << "fn " << fn.name << '(';
  for (std::size_t i = 0; i < fn.params.size(); ++i) os << (i ? ", " : "") << fn.params[i];
  os << ") {\n";
  for (const auto& b : fn.blocks) {
    os << b.label;
    if (!b.params.empty()) {
      os << '(';
      for (std::size_t i = 0; i < b.params.size(); ++i) os << (i ? ", " : "") << b.params[i];
      os << ')';
    }
    os << ":\n";
    for (const auto& in : b.instrs) os << "  " << print_instruction(in) << '\n';
    if (b.term) {
      const auto& t = *b.term;
      os << "  ";
      switch (t.kind) {
        case Terminator::Kind::Br:
          os << "br ";
          print_target(os, t.on_true);
          break;
        case Terminator::Kind::CondBr:
          os << "cbr " << print_operand(t.cond) << ", ";
          print_target(os, t.on_true);
          os << ", ";
          print_target(os, t.on_false);
          break;
        case Terminator::Kind::Return:
          os << "return";
          if (t.value) os << ' ' << print_operand(*t.value);
          break;
      }
      os << '\n';
    }
  }
  os << "}\n";
  return os.str();
}

std::string print_program(const Program& p) {
  std::ostringstream os;
  for (const auto& c : p.classes) {
    os << "class " << c.name;
    if (c.superclass) os << " extends " << *c.superclass;
    os << " {";
    if (!c.fields.empty()) {
      os << " fields ";
      for (std::size_t i = 0; i < c.fields.size(); ++i) os << (i ? ", " : "") << c.fields[i];
      os << ';';
    }
    if (!c.methods.empty()) {
      os << " methods ";
      for (std::size_t i = 0; i < c.methods.size(); ++i) os << (i ? ", " : "") << c.methods[i];
      os << ';';
    }
    os << " }\n";
  }
  if (!p.classes.empty()) os << '\n';
  for (const auto& g : p.globals) {
    os << "global " << g.name << " = ";
    if (g.class_name) {
      os << "new " << *g.class_name;
    } else {
      os << "newarray " << g.array_length;
    }
    os << '\n';
  }
  if (!p.globals.empty()) os << '\n';
  for (const auto& f : p.functions) os << print_function(f) << '\n';
  for (const auto& t : p.threads) {
    os << "thread " << t.function << '(';
    for (std::size_t i = 0; i < t.args.size(); ++i) os << (i ? ", " : "") << print_operand(t.args[i]);
    os << ")\n";
  }
  return os.str();
}

} // namespace cirlab
