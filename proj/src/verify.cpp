// SPDX-License-Identifier: Apache-2.0
#include "reflectevo/verify.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <thread>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include "reflectevo/error.hpp"
#include "reflectevo/gateway.hpp"
#include "reflectevo/prompts.hpp"

namespace reflectevo {

namespace {

constexpr std::string_view kSurroundingPunct = "()[]{}.,:;!?\"'`* \t\n\r";

std::string strip_surrounding(std::string_view s) {
  const auto b = s.find_first_not_of(kSurroundingPunct);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(kSurroundingPunct);
  return std::string(s.substr(b, e - b + 1));
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

/// Index just past the brace group opening at s[open] == '{', or npos.
std::size_t match_brace(const std::string& s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return i + 1;
  }
  return std::string::npos;
}

/// Replaces `\cmd{X}` by X, for every occurrence.
void unwrap_command(std::string& s, std::string_view cmd) {
  for (std::size_t pos = s.find(cmd); pos != std::string::npos; pos = s.find(cmd, pos)) {
    const auto open = pos + cmd.size();
    if (open >= s.size() || s[open] != '{') {
      pos = open;
      continue;
    }
    const auto close = match_brace(s, open);
    if (close == std::string::npos) return;
    s = s.substr(0, pos) + s.substr(open + 1, close - open - 2) + s.substr(close);
  }
}

/// `\frac{A}{B}` -> `(A)/(B)`.
void rewrite_fractions(std::string& s) {
  for (std::size_t pos = s.find("\\frac"); pos != std::string::npos; pos = s.find("\\frac")) {
    const auto a_open = pos + 5;
    if (a_open >= s.size() || s[a_open] != '{') return;
    const auto a_close = match_brace(s, a_open);
    if (a_close == std::string::npos || a_close >= s.size() || s[a_close] != '{') return;
    const auto b_close = match_brace(s, a_close);
    if (b_close == std::string::npos) return;
    const auto a = s.substr(a_open + 1, a_close - a_open - 2);
    const auto b = s.substr(a_close + 1, b_close - a_close - 2);
    s = s.substr(0, pos) + "(" + a + ")/(" + b + ")" + s.substr(b_close);
  }
}

std::string clean_numeric(std::string_view raw) {
  std::string s = trim(raw);
  replace_all(s, "$", "");
  unwrap_command(s, "\\boxed");
  unwrap_command(s, "\\text");
  unwrap_command(s, "\\mathrm");
  replace_all(s, "\\dfrac", "\\frac");
  replace_all(s, "\\tfrac", "\\frac");
  for (std::string_view junk : {"\\left", "\\right", "\\!", "\\,", "\\;", "\\ "}) replace_all(s, junk, "");
  rewrite_fractions(s);
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    // thousands separator: digit , digit
    if (c == ',' && !out.empty() && std::isdigit(static_cast<unsigned char>(out.back())) &&
        i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
      continue;
    }
    out.push_back(c);
  }
  while (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

std::string strip_parens(std::string s) {
  while (s.size() >= 2 && ((s.front() == '(' && s.back() == ')') || (s.front() == '{' && s.back() == '}'))) {
    // only strip when the outer pair encloses everything
    int depth = 0;
    bool encloses = true;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '(' || s[i] == '{') ++depth;
      if (s[i] == ')' || s[i] == '}') --depth;
      if (depth == 0 && i + 1 < s.size()) {
        encloses = false;
        break;
      }
    }
    if (!encloses) break;
    s = s.substr(1, s.size() - 2);
  }
  return s;
}

ParsedNumber make_exact(__int128 num, __int128 den) {
  if (den < 0) {
    num = -num;
    den = -den;
  }
  // std::gcd has no __int128 overload.
  __int128 a = num < 0 ? -num : num, b = den;
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    num /= a;
    den /= a;
  }
  ParsedNumber p;
  p.value = static_cast<double>(num) / static_cast<double>(den);
  constexpr __int128 lo = std::numeric_limits<std::int64_t>::min();
  constexpr __int128 hi = std::numeric_limits<std::int64_t>::max();
  if (num < lo || num > hi || den > hi) {
    p.exact = false;
    return p;
  }
  p.numerator = static_cast<std::int64_t>(num);
  p.denominator = static_cast<std::int64_t>(den);
  return p;
}

/// Plain decimal "[-+]digits[.digits]" or a strtod-parsable float.
std::optional<ParsedNumber> parse_decimal(std::string s) {
  s = strip_parens(std::move(s));
  if (s.empty()) return std::nullopt;
  bool neg = false;
  std::size_t i = 0;
  if (s[0] == '-' || s[0] == '+') {
    neg = s[0] == '-';
    i = 1;
  }
  __int128 num = 0, den = 1;
  bool digits = false, dot = false, overflow = false;
  for (; i < s.size(); ++i) {
    const char c = s[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digits = true;
      if (num > (static_cast<__int128>(1) << 100)) {
        overflow = true;
        continue;
      }
      num = num * 10 + (c - '0');
      if (dot) den *= 10;
    } else if (c == '.' && !dot) {
      dot = true;
    } else {
      break;
    }
  }
  if (digits && i == s.size() && !overflow) return make_exact(neg ? -num : num, den);

  // Scientific notation and anything else strtod accepts, as an inexact value.
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  ParsedNumber p;
  p.exact = false;
  p.value = v;
  return p;
}

std::string format_number(const ParsedNumber& p) {
  if (p.exact) {
    if (p.denominator == 1) return std::to_string(p.numerator);
    return std::to_string(p.numerator) + "/" + std::to_string(p.denominator);
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", p.value);
  return buf;
}

std::string normalize_choice(std::string_view raw) {
  std::string s = strip_surrounding(to_lower(collapse_whitespace(raw)));
  for (bool changed = true; changed;) {
    changed = false;
    for (std::string_view prefix :
         {"the correct answer is", "the answer is", "answer is", "answer", "option", "choice"}) {
      if (starts_with(s, prefix) && s.size() > prefix.size() &&
          kSurroundingPunct.find(s[prefix.size()]) != std::string_view::npos) {
        s = strip_surrounding(std::string_view(s).substr(prefix.size()));
        changed = true;
      }
    }
  }
  // "b) some option text" / "b. text" / "b: text" -> "b"
  if (s.size() >= 2 && std::isalpha(static_cast<unsigned char>(s[0])) &&
      std::string_view(").]:").find(s[1]) != std::string_view::npos) {
    s = s.substr(0, 1);
  }
  return s;
}

std::string normalize_code(std::string_view raw) {
  std::string s(raw);
  replace_all(s, "\r\n", "\n");
  std::string out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find('\n', start);
    if (end == std::string::npos) end = s.size();
    std::string line = s.substr(start, end - start);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    out += line;
    if (end == s.size()) break;
    out += '\n';
    start = end + 1;
  }
  return trim(out);
}

Feedback make_feedback(FeedbackValue value, VerifierKind verifier, std::string reason = {}) {
  return Feedback{value, verifier, std::move(reason)};
}

}  // namespace

MatchRule match_rule_for(AnswerKind kind) {
  switch (kind) {
    case AnswerKind::multiple_choice: return {kind, CompareMode::choice_letter};
    case AnswerKind::numeric: return {kind, CompareMode::numeric_tolerant};
    case AnswerKind::free_text: return {kind, CompareMode::exact};
    case AnswerKind::code: return {kind, CompareMode::external};
  }
  return {kind, CompareMode::exact};
}

std::optional<ParsedNumber> parse_number(std::string_view text) {
  std::string s = strip_parens(clean_numeric(text));
  if (s.empty()) return std::nullopt;

  // Split on a top-level '/'.
  int depth = 0;
  std::size_t slash = std::string::npos;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '(' || s[i] == '{') ++depth;
    if (s[i] == ')' || s[i] == '}') --depth;
    if (s[i] == '/' && depth == 0) {
      if (slash != std::string::npos) return std::nullopt;
      slash = i;
    }
  }
  if (slash == std::string::npos) return parse_decimal(s);

  bool neg = false;
  std::string lhs = s.substr(0, slash);
  if (!lhs.empty() && lhs[0] == '-' && lhs.size() > 1 && lhs[1] == '(') {
    neg = true;
    lhs = lhs.substr(1);
  }
  const auto a = parse_decimal(lhs);
  const auto b = parse_decimal(s.substr(slash + 1));
  if (!a || !b) return std::nullopt;
  if (b->value == 0.0) return std::nullopt;
  if (a->exact && b->exact) {
    auto p = make_exact(static_cast<__int128>(a->numerator) * b->denominator,
                        static_cast<__int128>(a->denominator) * b->numerator);
    if (neg) {
      p.numerator = -p.numerator;
      p.value = -p.value;
    }
    return p;
  }
  ParsedNumber p;
  p.exact = false;
  p.value = (neg ? -1.0 : 1.0) * a->value / b->value;
  return p;
}

std::string normalize_answer(std::string_view answer, AnswerKind kind) {
  switch (kind) {
    case AnswerKind::multiple_choice:
      return normalize_choice(answer);
    case AnswerKind::numeric:
      if (const auto n = parse_number(answer)) return format_number(*n);
      return to_lower(clean_numeric(answer));
    case AnswerKind::free_text:
      return strip_surrounding(to_lower(collapse_whitespace(answer)));
    case AnswerKind::code:
      return normalize_code(answer);
  }
  return trim(answer);
}

Feedback verify_oracle(std::string_view answer, std::string_view gold, AnswerKind kind) {
  const auto verifier = VerifierKind::oracle;
  if (kind == AnswerKind::numeric) {
    const auto a = parse_number(answer);
    const auto g = parse_number(gold);
    if (g && !a) return make_feedback(FeedbackValue::incorrect, verifier, "unparsable_numeric");
    if (a && g) {
      if (a->exact && g->exact && a->numerator == g->numerator && a->denominator == g->denominator) {
        return make_feedback(FeedbackValue::correct, verifier);
      }
      const bool close = std::fabs(a->value - g->value) <= kNumericTolerance;
      return make_feedback(close ? FeedbackValue::correct : FeedbackValue::incorrect, verifier);
    }
    // Non-numeric gold: fall through to a plain string comparison.
  }
  const bool same = normalize_answer(answer, kind) == normalize_answer(gold, kind);
  return make_feedback(same ? FeedbackValue::correct : FeedbackValue::incorrect, verifier);
}

std::optional<FeedbackValue> parse_judgment(std::string_view reply) {
  const auto s = to_lower(reply);
  for (std::string_view neg : {"incorrect", "not correct", "wrong"}) {
    if (contains(s, neg)) return FeedbackValue::incorrect;
  }
  if (contains(s, "correct")) return FeedbackValue::correct;
  return std::nullopt;
}

Feedback verify_external(std::string_view code, const ExternalRunner& runner) {
  const auto verifier = VerifierKind::external_runner;
  if (runner.command_template.empty()) {
    return make_feedback(FeedbackValue::unverified, verifier, "runner_error");
  }

  std::string path_template =
      (std::filesystem::temp_directory_path() / ("reflectevo-XXXXXX" + runner.file_suffix)).string();
  std::vector<char> buf(path_template.begin(), path_template.end());
  buf.push_back('\0');
  const int fd = mkstemps(buf.data(), static_cast<int>(runner.file_suffix.size()));
  if (fd < 0) return make_feedback(FeedbackValue::unverified, verifier, "runner_error");
  const std::string path(buf.data());
  struct Cleanup {
    std::string path;
    ~Cleanup() { std::remove(path.c_str()); }
  } cleanup{path};
  {
    std::size_t written = 0;
    while (written < code.size()) {
      const auto n = ::write(fd, code.data() + written, code.size() - written);
      if (n <= 0) break;
      written += static_cast<std::size_t>(n);
    }
    ::close(fd);
  }

  std::string command = runner.command_template;
  replace_all(command, "{file}", "'" + path + "'");

  const pid_t pid = ::fork();
  if (pid < 0) return make_feedback(FeedbackValue::unverified, verifier, "runner_error");
  if (pid == 0) {
    ::setpgid(0, 0);
    const int devnull = ::open("/dev/null", O_RDWR);
    if (devnull >= 0) {
      ::dup2(devnull, STDIN_FILENO);
      ::dup2(devnull, STDOUT_FILENO);
      ::dup2(devnull, STDERR_FILENO);
    }
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }

  const auto deadline = std::chrono::steady_clock::now() + runner.timeout;
  int status = 0;
  for (;;) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) return make_feedback(FeedbackValue::unverified, verifier, "runner_error");
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      return make_feedback(FeedbackValue::incorrect, verifier, "timeout");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  if (WIFEXITED(status)) {
    const int code_ = WEXITSTATUS(status);
    if (code_ == 0) return make_feedback(FeedbackValue::correct, verifier);
    // sh reports 126/127 when the command itself could not be run.
    if (code_ == 126 || code_ == 127) {
      return make_feedback(FeedbackValue::unverified, verifier, "runner_error");
    }
    return make_feedback(FeedbackValue::incorrect, verifier, "exit_" + std::to_string(code_));
  }
  return make_feedback(FeedbackValue::incorrect, verifier, "signaled");
}

// ---------------------------------------------------------------------------

Feedback OracleVerifier::verify(const TaskItem& task, const Turn& turn) {
  if (!turn.extracted_answer) {
    return make_feedback(FeedbackValue::incorrect, VerifierKind::oracle, "no_answer");
  }
  if (task.answer_kind == AnswerKind::code && runner_) {
    return verify_external(*turn.extracted_answer, *runner_);
  }
  return verify_oracle(*turn.extracted_answer, task.gold_answer, task.answer_kind);
}

SelfJudgmentVerifier::SelfJudgmentVerifier(std::shared_ptr<Gateway> gateway,
                                           const PromptLibrary& prompts, std::string model)
    : gateway_(std::move(gateway)), prompts_(prompts), model_(std::move(model)) {
  if (!gateway_) throw Error(ErrorCode::config, "self-judgment verifier needs a gateway");
}

Feedback SelfJudgmentVerifier::verify(const TaskItem& task, const Turn& turn) {
  if (!turn.extracted_answer) {
    return make_feedback(FeedbackValue::incorrect, VerifierKind::self_judgment, "no_answer");
  }
  return verify_self_judgment(task, turn.scratchpad, *turn.extracted_answer, *gateway_, prompts_,
                              model_);
}

Feedback verify_self_judgment(const TaskItem& task, std::string_view scratchpad,
                              std::string_view answer, Gateway& gateway,
                              const PromptLibrary& prompts, const std::string& model) {
  auto request = CompletionRequest::user(prompts.self_judgment().render(
      {{"Question", task.question},
       {"Scratchpad", std::string(scratchpad)},
       {"Answer", std::string(answer)}}));
  request.model = model;
  request.max_new_tokens = 16;
  const auto reply = gateway.complete(request);
  if (const auto verdict = parse_judgment(reply.text)) {
    return make_feedback(*verdict, VerifierKind::self_judgment);
  }
  return make_feedback(FeedbackValue::unverified, VerifierKind::self_judgment, "unparsable");
}

}  // namespace reflectevo
