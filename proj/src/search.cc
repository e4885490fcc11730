// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#include "fusekit/search.h"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>

namespace fusekit {

namespace {

constexpr double kStepTolerance = 1e-9;

[[noreturn]] void evaluator_error(const std::string& message) {
  throw Error(ErrorCode::kEvaluator, message);
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    return std::nullopt;
  }
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(sep, start);
    parts.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

}  // namespace

TableEvaluator::TableEvaluator(std::size_t arity, double resolution)
    : arity_(arity), resolution_(resolution) {
  if (arity < 2) {
    throw Error(ErrorCode::kInvalidArgument, "a score table needs at least two coefficients");
  }
  lattice_ = grid_intervals(resolution);
}

std::vector<std::int64_t> TableEvaluator::key(const FusionCoefficients& c) const {
  if (c.size() != arity_) {
    throw Error(ErrorCode::kInvalidArgument,
                "expected " + std::to_string(arity_) + " coefficients, got " +
                    std::to_string(c.size()));
  }
  std::vector<std::int64_t> k(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    k[i] = std::llround(c[i] * static_cast<double>(lattice_));
  }
  return k;
}

FusionCoefficients TableEvaluator::canonicalize(const FusionCoefficients& c) const {
  if (c.size() != arity_) return c;
  // Largest-remainder rounding keeps the lattice point on the simplex.
  const double n = static_cast<double>(lattice_);
  std::vector<std::int64_t> units(c.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double scaled = std::max(0.0, c[i]) * n;
    units[i] = static_cast<std::int64_t>(std::floor(scaled));
    assigned += units[i];
    remainders.emplace_back(scaled - static_cast<double>(units[i]), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < lattice_ && r < remainders.size(); ++r) {
    ++units[remainders[r].second];
    ++assigned;
  }
  FusionCoefficients out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    out[i] = static_cast<double>(units[i]) / n;
  }
  return out;
}

void TableEvaluator::set(const FusionCoefficients& c, double score) {
  auto [it, inserted] = table_.emplace(key(c), score);
  if (!inserted && it->second != score) {
    throw Error(ErrorCode::kInvalidArgument,
                "conflicting scores for one coefficient vector in the table");
  }
}

std::optional<double> TableEvaluator::lookup(const FusionCoefficients& c) const {
  auto it = table_.find(key(c));
  if (it == table_.end()) return std::nullopt;
  return it->second;
}

double TableEvaluator::evaluate(const FusionCoefficients& c) {
  if (auto score = lookup(c)) return *score;
  std::string coords;
  for (double v : c) coords += (coords.empty() ? "" : ",") + std::to_string(v);
  evaluator_error("score table has no entry for coefficients (" + coords + ")");
}

TableEvaluator TableEvaluator::from_csv(std::istream& in, double resolution) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    std::vector<double> row;
    bool numeric = true;
    for (auto field : split(view, ',')) {
      auto v = parse_double(field);
      if (!v) {
        numeric = false;
        break;
      }
      row.push_back(*v);
    }
    if (!numeric) {
      if (rows.empty()) continue;  // header
      throw Error(ErrorCode::kInvalidArgument,
                  "score table line " + std::to_string(line_no) + " is not numeric");
    }
    if (row.size() < 2 || (!rows.empty() && row.size() != rows[0].size())) {
      throw Error(ErrorCode::kInvalidArgument,
                  "score table line " + std::to_string(line_no) +
                      " has an inconsistent column count");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "score table is empty");
  }
  const std::size_t cols = rows[0].size();
  const std::size_t arity = cols == 2 ? 2 : cols - 1;
  TableEvaluator table(arity, resolution);
  for (const auto& row : rows) {
    FusionCoefficients c;
    if (cols == 2) {
      c = {row[0], 1.0 - row[0]};
    } else {
      c.assign(row.begin(), row.end() - 1);
    }
    table.set(c, row.back());
  }
  return table;
}

TableEvaluator TableEvaluator::from_csv_file(const std::filesystem::path& path,
                                             double resolution) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open score table '" + path.string() + "'");
  }
  return from_csv(in, resolution);
}

std::string shell_quote(const std::string& text) {
  std::string out = "'";
  for (char c : text) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

CommandResult run_command(const std::string& command, double timeout_seconds) {
  int out_pipe[2];
  int err_pipe[2];
  if (pipe(out_pipe) != 0) evaluator_error("cannot create pipe");
  if (pipe(err_pipe) != 0) {
    close(out_pipe[0]);
    close(out_pipe[1]);
    evaluator_error("cannot create pipe");
  }
  const pid_t pid = fork();
  if (pid < 0) evaluator_error("cannot fork evaluator");
  if (pid == 0) {
    setpgid(0, 0);
    dup2(out_pipe[1], STDOUT_FILENO);
    dup2(err_pipe[1], STDERR_FILENO);
    close(out_pipe[0]);
    close(out_pipe[1]);
    close(err_pipe[0]);
    close(err_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  close(out_pipe[1]);
  close(err_pipe[1]);

  CommandResult result;
  using Clock = std::chrono::steady_clock;
  const auto deadline =
      Clock::now() + std::chrono::duration_cast<Clock::duration>(
                         std::chrono::duration<double>(timeout_seconds));
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  std::string* sinks[2] = {&result.out, &result.err};
  int open_fds = 2;
  char buf[4096];
  while (open_fds > 0) {
    int wait_ms = -1;
    if (timeout_seconds > 0) {
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
                            deadline - Clock::now())
                            .count();
      if (left <= 0) {
        result.timed_out = true;
        break;
      }
      wait_ms = static_cast<int>(std::min<long long>(left, 1000));
    }
    const int ready = poll(fds, 2, wait_ms);
    if (ready < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) {
        continue;
      }
      const ssize_t n = read(fds[i].fd, buf, sizeof(buf));
      if (n > 0) {
        sinks[i]->append(buf, static_cast<std::size_t>(n));
      } else {
        close(fds[i].fd);
        fds[i].fd = -1;
        --open_fds;
      }
    }
  }
  if (result.timed_out) kill(-pid, SIGKILL);
  for (const pollfd& f : fds) {
    if (f.fd >= 0) close(f.fd);
  }
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

double parse_score(const std::string& output) {
  std::string_view rest(output);
  std::string_view last;
  for (auto line : split(rest, '\n')) {
    if (!trim(line).empty()) last = line;
  }
  if (trim(last).empty()) evaluator_error("evaluator printed no score");
  auto v = parse_double(last);
  if (!v || !std::isfinite(*v)) {
    evaluator_error("cannot parse score from evaluator output line \"" +
                    std::string(trim(last)) + "\"");
  }
  return *v;
}

double evaluate_external(const std::string& command_template,
                         const std::filesystem::path& fused_path,
                         double timeout_seconds) {
  static constexpr std::string_view kPlaceholder = "{checkpoint}";
  std::string command;
  const std::string quoted = shell_quote(fused_path.string());
  std::string_view rest(command_template);
  for (auto pos = rest.find(kPlaceholder); pos != std::string_view::npos;
       pos = rest.find(kPlaceholder)) {
    command.append(rest.substr(0, pos));
    command += quoted;
    rest.remove_prefix(pos + kPlaceholder.size());
  }
  command.append(rest);

  CommandResult r = run_command(command, timeout_seconds);
  if (r.timed_out) {
    evaluator_error("evaluator timed out after " + std::to_string(timeout_seconds) +
                    " s: " + command);
  }
  if (r.exit_code != 0) {
    evaluator_error("evaluator exited with status " + std::to_string(r.exit_code) +
                    ": " + std::string(trim(r.err)));
  }
  return parse_score(r.out);
}

CommandEvaluator::CommandEvaluator(std::vector<std::filesystem::path> checkpoints,
                                   CommandOptions options, FusionOptions fusion)
    : checkpoints_(std::move(checkpoints)),
      options_(std::move(options)),
      fusion_(fusion) {
  if (checkpoints_.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "command evaluator needs at least two checkpoints");
  }
  if (options_.command_template.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty evaluator command");
  }
  if (options_.scratch_dir.empty()) {
    options_.scratch_dir = std::filesystem::temp_directory_path() /
                           ("fusekit-" + std::to_string(getpid()));
  }
  std::error_code ec;
  std::filesystem::create_directories(options_.scratch_dir, ec);
  if (ec || access(options_.scratch_dir.c_str(), W_OK) != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "scratch directory '" + options_.scratch_dir.string() +
                    "' is not writable");
  }
}

double CommandEvaluator::evaluate(const FusionCoefficients& c) {
  const auto path =
      options_.scratch_dir / ("fused_" + std::to_string(counter_++) + ".fta");
  fuse_archives(checkpoints_, c, path, fusion_);
  double score = 0.0;
  try {
    score = evaluate_external(options_.command_template, path,
                              options_.timeout_seconds);
  } catch (...) {
    if (!options_.keep) std::filesystem::remove(path);
    throw;
  }
  if (options_.keep) {
    written_.push_back(path);
  } else {
    std::filesystem::remove(path);
  }
  return score;
}

std::uint32_t grid_intervals(double step) {
  if (!(step > 0.0) || step > 1.0 || !std::isfinite(step)) {
    throw Error(ErrorCode::kInvalidArgument, "step must lie in (0, 1]");
  }
  const double n = std::round(1.0 / step);
  if (std::abs(n * step - 1.0) > kStepTolerance) {
    throw Error(ErrorCode::kInvalidArgument,
                "step " + std::to_string(step) + " does not divide 1");
  }
  return static_cast<std::uint32_t>(n);
}

SearchResult grid_search_alpha(Evaluator& evaluator, const GridOptions& options) {
  if (evaluator.arity() != 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "alpha grid search fuses exactly two checkpoints");
  }
  const std::uint32_t n = grid_intervals(options.step);
  std::vector<std::optional<double>> scores(n + 1);
  SearchResult result;

  auto score_at = [&](std::uint32_t k) {
    if (!scores[k]) {
      const double alpha = static_cast<double>(k) / n;
      FusionCoefficients c = evaluator.canonicalize({alpha, 1.0 - alpha});
      const double s = evaluator.evaluate(c);
      scores[k] = s;
      result.evaluations.push_back({std::move(c), s});
    }
    return *scores[k];
  };

  if (!options.early_stop) {
    for (std::uint32_t k = 0; k <= n; ++k) score_at(k);
  } else {
    std::uint32_t up = 0;
    double prev = score_at(0);
    while (up + 1 <= n && score_at(up + 1) > prev) {
      prev = *scores[++up];
    }
    // The walk up stopped at up + 1 (or hit the end); walk down from 1 over
    // the points it has not reached.
    std::uint32_t down = n;
    if (down > up + 1) {
      prev = score_at(down);
      while (down - 1 > up + 1 && score_at(down - 1) > prev) {
        prev = *scores[--down];
      }
    }
  }

  std::optional<std::uint32_t> best;
  auto center_distance = [n](std::uint32_t k) {
    return std::abs(2 * static_cast<std::int64_t>(k) - static_cast<std::int64_t>(n));
  };
  for (std::uint32_t k = 0; k <= n; ++k) {
    if (!scores[k]) continue;
    if (!best || *scores[k] > *scores[*best] ||
        (*scores[k] == *scores[*best] && center_distance(k) < center_distance(*best))) {
      best = k;
    }
  }
  const double alpha = static_cast<double>(*best) / n;
  result.best = evaluator.canonicalize({alpha, 1.0 - alpha});
  result.best_score = *scores[*best];
  result.terminated_early = result.evaluations.size() < n + 1;
  return result;
}

FusionCoefficients sample_simplex(std::size_t k, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> cuts(k - 1);
  for (double& u : cuts) u = unit(rng);
  std::sort(cuts.begin(), cuts.end());
  FusionCoefficients c(k);
  double prev = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    c[i] = cuts[i] - prev;
    prev = cuts[i];
  }
  c[k - 1] = 1.0 - prev;
  return c;
}

SearchResult random_simplex_search(Evaluator& evaluator,
                                   const SimplexOptions& options) {
  const std::size_t k = evaluator.arity();
  if (k < 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "random simplex search needs at least three checkpoints");
  }
  if (options.trials == 0) {
    throw Error(ErrorCode::kInvalidArgument, "at least one trial is required");
  }
  std::mt19937_64 rng(options.seed);
  SearchResult result;
  for (std::uint32_t t = 0; t < options.trials; ++t) {
    FusionCoefficients c = t == 0 ? uniform_coefficients(k) : sample_simplex(k, rng);
    c = evaluator.canonicalize(c);
    const double s = evaluator.evaluate(c);
    if (result.evaluations.empty() || s > result.best_score) {
      result.best = c;
      result.best_score = s;
    }
    result.evaluations.push_back({std::move(c), s});
  }
  return result;
}

}  // namespace fusekit
