// Copyright 2026 The Knowbank Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <sys/types.h>

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace knowbank::harness {

// Child process with stdout and stderr appended to a log file.
class Process {
 public:
  static Process spawn(const std::vector<std::string>& argv, const std::filesystem::path& log);

  Process(Process&& other) noexcept;
  Process& operator=(Process&& other) noexcept;
  Process(const Process&) = delete;
  Process& operator=(const Process&) = delete;
  // Kills and reaps a child that is still running.
  ~Process();

  pid_t pid() const { return pid_; }
  bool running();
  void signal(int sig);
  // Exit code, 128 + signal for signalled children, none on timeout.
  std::optional<int> wait(std::chrono::milliseconds timeout);
  // SIGTERM, then SIGKILL after the grace period.
  int stop(std::chrono::milliseconds grace = std::chrono::milliseconds(3000));

  const std::filesystem::path& log() const { return log_; }

 private:
  Process(pid_t pid, std::filesystem::path log) : pid_(pid), log_(std::move(log)) {}
  bool reap(int options);

  pid_t pid_ = -1;
  std::filesystem::path log_;
  std::optional<int> status_;
};

// Last lines of a log file, for error reports.
std::string tail_file(const std::filesystem::path& path, size_t lines = 20);

}  // namespace knowbank::harness
