#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dstreamon/compiler/artifact.hpp"
#include "dstreamon/compiler/dsl.hpp"
#include "dstreamon/compiler/programs.hpp"
#include "dstreamon/packet/pcap.hpp"
#include "dstreamon/packet/synth.hpp"
#include "dstreamon/xfsm/engine.hpp"
#include "dstreamon/xfsm/metrics.hpp"

namespace py = pybind11;
using namespace dstreamon;

namespace {

py::bytes to_py(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

Bytes from_py(const py::bytes& b) {
  std::string_view s = b;
  return Bytes(s.begin(), s.end());
}

/// Parses DSL text, raising ValueError with every located error on failure.
xfsm::XfsmProgram parse_or_raise(const std::string& xml) {
  auto r = compiler::parse_dsl(xml);
  if (!r.program) throw py::value_error(r.report.to_string());
  return *r.program;
}

std::vector<py::dict> issues(const std::vector<xfsm::Issue>& in) {
  std::vector<py::dict> out;
  for (const auto& i : in) out.push_back(py::dict(py::arg("path") = i.path, py::arg("message") = i.message));
  return out;
}

const char* kind_name(compiler::ArtifactErrorKind k) {
  switch (k) {
    case compiler::ArtifactErrorKind::BadMagic: return "bad_magic";
    case compiler::ArtifactErrorKind::UnsupportedFormat: return "unsupported_format";
    case compiler::ArtifactErrorKind::ChecksumMismatch: return "checksum_mismatch";
    case compiler::ArtifactErrorKind::Truncated: return "truncated";
    case compiler::ArtifactErrorKind::Invalid: return "invalid";
  }
  return "invalid";
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "XFSM engine, program compiler, count-min sketch and trace tools";

  py::class_<packet::PacketRecord>(m, "Packet")
      .def(py::init<>())
      .def_property(
          "ts_us", [](const packet::PacketRecord& p) { return p.ts.micros; },
          [](packet::PacketRecord& p, std::uint64_t v) { p.ts.micros = v; })
      .def_property(
          "src_ip", [](const packet::PacketRecord& p) { return p.src_ip.to_string(); },
          [](packet::PacketRecord& p, const std::string& s) {
            auto ip = packet::Ipv4::parse(s);
            if (!ip) throw py::value_error("not a dotted IPv4 address: " + s);
            p.src_ip = *ip;
          })
      .def_property(
          "dst_ip", [](const packet::PacketRecord& p) { return p.dst_ip.to_string(); },
          [](packet::PacketRecord& p, const std::string& s) {
            auto ip = packet::Ipv4::parse(s);
            if (!ip) throw py::value_error("not a dotted IPv4 address: " + s);
            p.dst_ip = *ip;
          })
      .def_readwrite("ip_proto", &packet::PacketRecord::ip_proto)
      .def_readwrite("src_port", &packet::PacketRecord::src_port)
      .def_readwrite("dst_port", &packet::PacketRecord::dst_port)
      .def_readwrite("tcp_flags", &packet::PacketRecord::tcp_flags)
      .def_readwrite("wire_len", &packet::PacketRecord::wire_len)
      .def("well_formed", &packet::PacketRecord::well_formed)
      .def(py::self == py::self)
      .def("__repr__", [](const packet::PacketRecord& p) {
        return "<Packet " + p.ts.to_string() + " " + p.src_ip.to_string() + ":" + std::to_string(p.src_port) +
               " -> " + p.dst_ip.to_string() + ":" + std::to_string(p.dst_port) + " proto=" +
               std::to_string(p.ip_proto) + " flags=" + std::to_string(p.tcp_flags) + ">";
      });

  m.def(
      "synthesize", [](const std::string& stanza) { return packet::synthesize(packet::parse_trace_spec(stanza)); },
      py::arg("stanza"), "Deterministic synthetic trace, e.g. \"syn_flood count=6\".");
  m.def(
      "read_pcap", [](const std::string& path) { return packet::read_pcap(path).packets; }, py::arg("path"));
  m.def(
      "write_pcap",
      [](const std::string& path, const std::vector<packet::PacketRecord>& pkts) { packet::write_pcap(path, pkts); },
      py::arg("path"), py::arg("packets"));

  m.def(
      "builtin_program",
      [](const std::string& name) {
        auto dsl = programs::builtin(name);
        if (!dsl) throw py::key_error("no builtin program named '" + name + "'");
        return std::string(*dsl);
      },
      py::arg("name"), "DSL text of a canned program (\"synflood\" or \"portscan\").");

  m.def(
      "validate",
      [](const std::string& xml) {
        auto r = compiler::parse_dsl(xml);
        return py::dict(py::arg("ok") = r.report.ok(), py::arg("errors") = issues(r.report.errors),
                        py::arg("warnings") = issues(r.report.warnings));
      },
      py::arg("xml"), "Validation report: {'ok', 'errors': [{'path', 'message'}], 'warnings'}.");

  m.def(
      "compile",
      [](const std::string& xml) { return to_py(compiler::compile_ir(parse_or_raise(xml)).bytes); },
      py::arg("xml"), "Compiles DSL text to artifact bytes; ValueError lists every error.");

  py::register_exception<compiler::ArtifactError>(m, "ArtifactError", PyExc_ValueError);
  m.def(
      "decompile", [](const py::bytes& artifact) { return compiler::to_dsl(compiler::decompile(from_py(artifact))); },
      py::arg("artifact"), "Decodes artifact bytes back to DSL text; raises ArtifactError.");
  m.def(
      "artifact_error_kind",
      [](const py::bytes& artifact) -> std::optional<std::string> {
        try {
          compiler::decompile(from_py(artifact));
        } catch (const compiler::ArtifactError& e) {
          return std::string(kind_name(e.kind));
        }
        return std::nullopt;
      },
      py::arg("artifact"), "Name of the decode error, or None when the artifact is valid.");

  py::class_<xfsm::Engine>(m, "Engine")
      .def(py::init([](const std::string& xml) {
             return xfsm::Engine(std::make_shared<xfsm::XfsmProgram>(parse_or_raise(xml)));
           }),
           py::arg("xml"))
      .def_static(
          "from_artifact",
          [](const py::bytes& a) {
            return xfsm::Engine(std::make_shared<xfsm::XfsmProgram>(compiler::decompile(from_py(a))));
          },
          py::arg("artifact"))
      .def(
          "step",
          [](xfsm::Engine& e, const packet::PacketRecord& pkt) {
            std::vector<py::dict> out;
            for (const auto& ev : e.step(pkt))
              out.push_back(py::dict(py::arg("severity") = std::string(to_string(ev.severity)),
                                     py::arg("label") = ev.label, py::arg("ts_us") = ev.ts.micros,
                                     py::arg("payload") = ev.payload));
            return out;
          },
          py::arg("packet"), "Feeds one packet; returns the events it published.")
      .def("state_of", &xfsm::Engine::state_of, py::arg("packet"))
      .def_property_readonly("program_id", [](const xfsm::Engine& e) { return e.program().program_id; })
      .def_property_readonly("version", [](const xfsm::Engine& e) { return e.program().version; })
      .def_property_readonly("flow_count", [](const xfsm::Engine& e) { return e.flows().size(); });

  py::class_<xfsm::CountMinSketch>(m, "CountMinSketch")
      .def(py::init<std::uint32_t, std::uint32_t, std::uint64_t>(), py::arg("width"), py::arg("depth"),
           py::arg("seed") = 0)
      .def(
          "add", [](xfsm::CountMinSketch& s, const std::string& k, std::uint64_t n) { s.add(k, n); }, py::arg("key"),
          py::arg("amount") = 1)
      .def(
          "estimate", [](const xfsm::CountMinSketch& s, const std::string& k) { return s.estimate(k); },
          py::arg("key"));
}
