#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "blockmerge/errors.hpp"
#include "blockmerge/objectives.hpp"

namespace blockmerge {

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out.push_back(c);
    }
  }
  return out + "'";
}

std::string substitute(std::string text, const std::string& key, const std::string& value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path make_temp_dir() {
  std::string pattern = (std::filesystem::temp_directory_path() / "blockmerge-eval-XXXXXX").string();
  if (!mkdtemp(pattern.data())) throw IoError("cannot create a temporary directory");
  return pattern;
}

}  // namespace

ExternalCommandEvaluator::ExternalCommandEvaluator(std::string command_template,
                                                   std::chrono::duration<double> timeout)
    : template_(std::move(command_template)), timeout_(timeout) {
  if (template_.find("{model}") == std::string::npos || template_.find("{output}") == std::string::npos) {
    throw ConfigError("command template needs both {model} and {output} placeholders");
  }
  if (!(timeout_.count() > 0.0)) throw ConfigError("evaluator timeout must be positive");
}

std::string ExternalCommandEvaluator::describe() const {
  return "external:" + template_;
}

RawScores ExternalCommandEvaluator::score(const TensorMap* merged, std::span<const double>) {
  if (!merged) throw EvaluationError("external evaluator needs a merged model");
  const auto dir = make_temp_dir();
  const auto model_path = dir / "merged.btc";
  save_tensor_map(*merged, model_path);
  RawScores scores = run(model_path);
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  return scores;
}

RawScores ExternalCommandEvaluator::run(const std::filesystem::path& model_path) const {
  const auto dir = make_temp_dir();
  const auto output_path = dir / "scores.json";
  const auto log_path = dir / "command.log";
  std::string command = substitute(template_, "{model}", shell_quote(model_path.string()));
  command = substitute(command, "{output}", shell_quote(output_path.string()));

  const pid_t pid = fork();
  if (pid < 0) throw EvaluationError("fork failed");
  if (pid == 0) {
    setpgid(0, 0);
    const int fd = ::open(log_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd >= 0) {
      dup2(fd, STDOUT_FILENO);
      dup2(fd, STDERR_FILENO);
      ::close(fd);
    }
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);

  const auto deadline = std::chrono::steady_clock::now() +
                        std::chrono::duration_cast<std::chrono::steady_clock::duration>(timeout_);
  int status = 0;
  for (;;) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw EvaluationError("waitpid failed");
    if (std::chrono::steady_clock::now() >= deadline) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      throw TimeoutError("evaluator command exceeded " + std::to_string(timeout_.count()) +
                         " s; log kept at " + log_path.string());
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }

  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    throw EvaluationError("evaluator command exited with status " + std::to_string(code) +
                          "; output:\n" + read_text(log_path));
  }

  RawScores scores;
  try {
    const auto doc = nlohmann::json::parse(read_text(output_path));
    for (const auto& [name, value] : doc.at("scores").items()) {
      if (!value.is_number()) throw FormatError("score for '" + name + "' is not a number");
      scores[name] = value.get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("evaluator output is not {\"scores\": {...}}: ") + e.what());
  }
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  return scores;
}

}  // namespace blockmerge
