// Minimal external scorer: reads one JSON job per line and replies with a
// reward equal to the response length divided by 100.
#include <iostream>
#include <string>

#include <json.hpp>

int main() {
  std::string line;
  while (std::getline(std::cin, line)) {
    const auto job = nlohmann::json::parse(line);
    nlohmann::json reply;
    reply["job_id"] = job.at("job_id");
    reply["reward"] = static_cast<double>(job.at("response").get<std::string>().size()) / 100.0;
    std::cout << reply.dump() << '\n' << std::flush;
  }
  return 0;
}
