#include <doctest.h>

#include <future>
#include <thread>

#include <json.hpp>

#include "handpass/service.hpp"
#include "handpass/synth.hpp"
#include "support.hpp"

using namespace handpass;
using nlohmann::json;

namespace {

SynthConfig service_config() {
  SynthConfig cfg;
  cfg.users = 5;
  cfg.captures_per_user = 2;
  cfg.frames_per_capture = 200;
  cfg.packets_per_second = 100;
  return cfg;
}

std::shared_ptr<const EnrollmentStore> service_store() {
  const SynthConfig cfg = service_config();
  FeatureMatrix rows;
  for (int u = 1; u <= cfg.users; ++u) {
    const auto frames = generate_capture_frames(cfg, u, Hand::Right, 1);
    const BuiltRows b = build_rows(std::span<const CsiFrame>(frames), synth_meta(cfg, u, Hand::Right, 1),
                                   SubcarrierMask::vht80(), {});
    if (u == 1) {
      rows = b.matrix;
    } else {
      rows.append(b.matrix);
    }
  }
  EnrollOptions opts;
  opts.hyper.n_trees = 15;
  opts.packets_per_second = cfg.packets_per_second;
  return std::make_shared<const EnrollmentStore>(enroll(rows, opts));
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("requests before a store is loaded are not-ready, malformed ones are bad-request") {
  Service service;
  CHECK_FALSE(service.ready());
  const json a = json::parse(service.handle_line(R"({"authenticate":{"capture":"x.pcap"}})"));
  CHECK(a["ok"] == false);
  CHECK(a["error"]["code"] == "not-ready");
  const json b = json::parse(service.handle_line("{not json"));
  CHECK(b["error"]["code"] == "bad-request");
  const json c = json::parse(service.handle_line(R"({"hello":1})"));
  CHECK(c["error"]["code"] == "bad-request");
}

TEST_CASE("socket round-trip grants user 5 and logs the decision") {
  test::TempDir dir("service");
  const SynthConfig cfg = service_config();
  write_capture(generate_capture_frames(cfg, 5, Hand::Right, 2), dir / "probe.pcap");

  AuditLog audit(dir / "audit.jsonl");
  Service service(&audit);
  service.set_store(service_store());
  REQUIRE(service.ready());

  std::atomic<bool> stop{false};
  std::promise<std::uint16_t> bound;
  std::thread server([&] { service.serve(0, stop, [&](std::uint16_t p) { bound.set_value(p); }); });
  const std::uint16_t port = bound.get_future().get();

  const json request = {{"id", 17}, {"authenticate", {{"capture", (dir / "probe.pcap").string()}}}};
  const json reply = json::parse(request_once(port, request.dump()));
  CHECK(reply["ok"] == true);
  CHECK(reply["id"] == 17);
  CHECK(reply["decision"]["user_id"] == 5);
  CHECK(reply["decision"]["decision"] == "Grant");
  CHECK(reply["decision"]["frames_used"] == 100);

  const json missing = json::parse(request_once(port, R"({"authenticate":{"capture":"/nonexistent.pcap"}})"));
  CHECK(missing["error"]["code"] == "io-failure");
  const json garbage = json::parse(request_once(port, "[]"));
  CHECK(garbage["error"]["code"] == "bad-request");

  const std::vector<CsiFrame> few = generate_capture_frames(cfg, 1, Hand::Right, 2);
  json hex = json::array();
  for (std::size_t i = 0; i < 10; ++i) hex.push_back(to_hex(encode_payload(few[i])));
  const json shortwin = json::parse(request_once(port, json{{"authenticate", {{"frames", hex}}}}.dump()));
  CHECK(shortwin["error"]["code"] == "window-too-short");
  const json windowed =
      json::parse(request_once(port, json{{"window", 0.1}, {"authenticate", {{"frames", hex}}}}.dump()));
  CHECK(windowed["ok"] == true);
  CHECK(windowed["decision"]["frames_used"] == 10);

  stop = true;
  server.join();
  const auto log = audit.read();
  REQUIRE(log.decisions.size() == 2);
  CHECK(log.decisions[0].user_id == 5);
}

}  // TEST_SUITE
