// Canned preference labeler for exercising the http provider end to end.
// Answers POST /label with {"preferred":"a"|"b"} looked up by pair_id from a
// table file of lines "<pair_id> a|b"; --prefer gives a constant fallback for
// ids missing from the table, otherwise unknown ids get a 404.
#include <cstdio>
#include <fstream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

int main(int argc, char** argv) {
  CLI::App app{"canned preference labeler"};
  std::string table_path, prefer;
  int port = 8787;
  std::string host = "127.0.0.1";
  app.add_option("--table", table_path, "file of lines: <pair_id> a|b");
  app.add_option("--prefer", prefer, "constant answer for unlisted pairs")
      ->check(CLI::IsMember({"a", "b"}));
  app.add_option("--port", port, "listen port");
  app.add_option("--host", host, "bind address");
  CLI11_PARSE(app, argc, argv);

  std::map<std::string, std::string> table;
  if (!table_path.empty()) {
    std::ifstream f(table_path);
    if (!f) {
      std::fprintf(stderr, "cannot read %s\n", table_path.c_str());
      return 1;
    }
    std::string id, side;
    while (f >> id >> side) {
      if (side != "a" && side != "b") {
        std::fprintf(stderr, "bad side %s for pair %s\n", side.c_str(),
                     id.c_str());
        return 1;
      }
      table[id] = side;
    }
  }

  httplib::Server srv;
  srv.Post("/label", [&](const httplib::Request& req, httplib::Response& res) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const std::exception&) {
      res.status = 400;
      res.set_content("{\"error\":\"bad json\"}", "application/json");
      return;
    }
    if (!body.contains("pair_id")) {
      res.status = 400;
      res.set_content("{\"error\":\"missing pair_id\"}", "application/json");
      return;
    }
    const std::string id = body["pair_id"].get<std::string>();
    auto it = table.find(id);
    std::string side = it != table.end() ? it->second : prefer;
    if (side.empty()) {
      res.status = 404;
      res.set_content("{\"error\":\"unknown pair\"}", "application/json");
      return;
    }
    nlohmann::json out;
    out["preferred"] = side;
    res.set_content(out.dump(), "application/json");
  });

  std::printf("listening on %s:%d\n", host.c_str(), port);
  std::fflush(stdout);
  if (!srv.listen(host.c_str(), port)) {
    std::fprintf(stderr, "listen failed on %s:%d\n", host.c_str(), port);
    return 1;
  }
  return 0;
}
