#include "opa/model.hpp"

#include <cctype>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "opa/textio.hpp"

namespace opa::model {

namespace {

[[noreturn]] void fail(const std::string& what) { throw std::runtime_error(what); }

const Route* find_route(const std::unordered_map<std::string, const Route*>& by_id,
                        const std::string& route_id) {
  auto it = by_id.find(route_id);
  return it == by_id.end() ? nullptr : it->second;
}

std::unordered_map<std::string, const Route*> index_routes(const Instance& instance) {
  std::unordered_map<std::string, const Route*> by_id;
  by_id.reserve(instance.routes.size());
  for (const Route& r : instance.routes) by_id.emplace(r.id, &r);
  return by_id;
}

using textio::format_double;
using textio::LineReader;
using textio::parse_int;
using textio::parse_real;
using textio::split_tokens;

bool has_whitespace(const std::string& s) {
  for (unsigned char c : s)
    if (std::isspace(c)) return true;
  return s.empty();
}

}  // namespace

void validate(const Instance& instance) {
  if (instance.parcels.empty()) fail("instance '" + instance.label + "': m >= 1 required");
  if (instance.n_r_max < 1) fail("instance '" + instance.label + "': n_r_max >= 1 required");

  std::unordered_set<std::string> route_ids;
  for (const Route& r : instance.routes) {
    if (has_whitespace(r.id)) fail("route id '" + r.id + "' must be a non-empty token");
    if (!route_ids.insert(r.id).second) fail("duplicate route id '" + r.id + "'");
    if (r.hub_ids.empty()) fail("route '" + r.id + "': hub list must be non-empty");
  }

  auto by_id = index_routes(instance);
  for (std::size_t i = 0; i < instance.parcels.size(); ++i) {
    const Parcel& p = instance.parcels[i];
    if (p.id != static_cast<int>(i))
      fail("parcel at position " + std::to_string(i) + " has id " + std::to_string(p.id) +
           "; ids must equal arrival order");
    if (p.candidates.empty()) fail("parcel " + std::to_string(p.id) + ": candidates must be non-empty");
    if (static_cast<int>(p.candidates.size()) > instance.n_r_max)
      fail("parcel " + std::to_string(p.id) + ": " + std::to_string(p.candidates.size()) +
           " candidates exceed n_r_max=" + std::to_string(instance.n_r_max));
    if (!(p.weight >= 0.0)) fail("parcel " + std::to_string(p.id) + ": weight must be nonnegative");
    for (const Candidate& c : p.candidates) {
      const Route* r = find_route(by_id, c.route_id);
      if (r == nullptr)
        fail("parcel " + std::to_string(p.id) + ": unknown route '" + c.route_id + "'");
      if (r->origin != p.origin || r->destination != p.destination)
        fail("parcel " + std::to_string(p.id) + ": route '" + c.route_id +
             "' serves a different origin-destination pair");
      if (!(c.cost >= 0.0))
        fail("parcel " + std::to_string(p.id) + ": cost for route '" + c.route_id +
             "' must be nonnegative");
    }
  }

  std::unordered_set<std::string> constraint_ids;
  for (const ConstraintSpec& k : instance.constraints) {
    if (!constraint_ids.insert(k.id).second) fail("duplicate constraint id '" + k.id + "'");
    if (k.kind == ConstraintKind::Capacity) {
      if (k.upper_bound < 1) fail("capacity constraint '" + k.id + "': upper bound must be >= 1");
      if (has_whitespace(k.hub_id)) fail("capacity constraint '" + k.id + "': hub id required");
    } else {
      if (!(0.0 <= k.p_lower && k.p_lower <= k.p_upper && k.p_upper <= 1.0))
        fail("proportion constraint '" + k.id + "': need 0 <= p_lower <= p_upper <= 1");
      if (has_whitespace(k.provider_id))
        fail("proportion constraint '" + k.id + "': provider id required");
    }
  }
}

std::vector<std::string> routes_touching_constraint(const Instance& instance,
                                                    const ConstraintSpec& k,
                                                    const Parcel& parcel) {
  auto by_id = index_routes(instance);
  std::vector<std::string> touched;
  if (k.kind == ConstraintKind::Proportion &&
      (parcel.origin != k.od_origin || parcel.destination != k.od_destination))
    return touched;
  for (const Candidate& c : parcel.candidates) {
    const Route* r = find_route(by_id, c.route_id);
    if (r == nullptr)
      fail("parcel " + std::to_string(parcel.id) + ": unknown route '" + c.route_id + "'");
    bool hit = false;
    if (k.kind == ConstraintKind::Capacity) {
      for (const std::string& hub : r->hub_ids)
        if (hub == k.hub_id) {
          hit = true;
          break;
        }
    } else {
      hit = (r->provider_id == k.provider_id);
    }
    if (hit) touched.push_back(c.route_id);
  }
  return touched;
}

// ---------------------------------------------------------------------------
// Serialization
//
// Line-oriented text, whitespace-separated tokens:
//   opa-instance v1
//   label <rest of line>
//   n_r <int>
//   routes <count>
//   <id> <origin> <destination> <provider> <hub_count> <hub>...
//   constraints <count>
//   cap <id> <hub_id> <upper_bound>
//   prop <id> <origin> <destination> <provider> <p_lower> <p_upper>
//   parcels <count>
//   <id> <origin> <destination> <weight> <cand_count> <route_id> <cost> ...
//   end
// ---------------------------------------------------------------------------

void write_instance(const Instance& instance, std::ostream& out) {
  validate(instance);
  out << "opa-instance v1\n";
  out << "label " << instance.label << "\n";
  out << "n_r " << instance.n_r_max << "\n";
  out << "routes " << instance.routes.size() << "\n";
  for (const Route& r : instance.routes) {
    out << r.id << ' ' << r.origin << ' ' << r.destination << ' ' << r.provider_id << ' '
        << r.hub_ids.size();
    for (const std::string& hub : r.hub_ids) out << ' ' << hub;
    out << "\n";
  }
  out << "constraints " << instance.constraints.size() << "\n";
  for (const ConstraintSpec& k : instance.constraints) {
    if (k.kind == ConstraintKind::Capacity) {
      out << "cap " << k.id << ' ' << k.hub_id << ' ' << k.upper_bound << "\n";
    } else {
      out << "prop " << k.id << ' ' << k.od_origin << ' ' << k.od_destination << ' '
          << k.provider_id << ' ' << format_double(k.p_lower) << ' ' << format_double(k.p_upper)
          << "\n";
    }
  }
  out << "parcels " << instance.parcels.size() << "\n";
  for (const Parcel& p : instance.parcels) {
    out << p.id << ' ' << p.origin << ' ' << p.destination << ' ' << format_double(p.weight) << ' '
        << p.candidates.size();
    for (const Candidate& c : p.candidates) out << ' ' << c.route_id << ' ' << format_double(c.cost);
    out << "\n";
  }
  out << "end\n";
}

Instance read_instance(std::istream& in, const std::string& origin_name) {
  LineReader reader(in, origin_name);
  Instance instance;

  if (reader.next_line() != "opa-instance v1") reader.error("expected header 'opa-instance v1'");

  {
    const std::string line = reader.next_line();
    if (line.rfind("label", 0) != 0) reader.error("expected 'label <text>'");
    instance.label = line.size() > 6 ? line.substr(6) : "";
  }
  {
    auto toks = split_tokens(reader.next_line());
    if (toks.size() != 2 || toks[0] != "n_r") reader.error("expected 'n_r <int>'");
    instance.n_r_max = static_cast<int>(parse_int(reader, toks[1], "n_r"));
    if (instance.n_r_max < 1) reader.error("n_r must be >= 1");
  }

  {
    auto toks = split_tokens(reader.next_line());
    if (toks.size() != 2 || toks[0] != "routes") reader.error("expected 'routes <count>'");
    const long long count = parse_int(reader, toks[1], "route count");
    instance.routes.reserve(static_cast<std::size_t>(count));
    for (long long i = 0; i < count; ++i) {
      auto rt = split_tokens(reader.next_line());
      if (rt.size() < 5) reader.error("route record needs id, od, provider, hub count");
      Route r;
      r.id = rt[0];
      r.origin = rt[1];
      r.destination = rt[2];
      r.provider_id = rt[3];
      const long long hub_count = parse_int(reader, rt[4], "hub count");
      if (hub_count < 1) reader.error("route '" + r.id + "': hub count must be >= 1");
      if (static_cast<long long>(rt.size()) != 5 + hub_count)
        reader.error("route '" + r.id + "': expected " + std::to_string(hub_count) + " hub ids");
      for (long long h = 0; h < hub_count; ++h) r.hub_ids.push_back(rt[5 + h]);
      instance.routes.push_back(std::move(r));
    }
  }

  {
    auto toks = split_tokens(reader.next_line());
    if (toks.size() != 2 || toks[0] != "constraints") reader.error("expected 'constraints <count>'");
    const long long count = parse_int(reader, toks[1], "constraint count");
    instance.constraints.reserve(static_cast<std::size_t>(count));
    for (long long i = 0; i < count; ++i) {
      auto ct = split_tokens(reader.next_line());
      if (ct.empty()) reader.error("empty constraint record");
      ConstraintSpec k;
      if (ct[0] == "cap") {
        if (ct.size() != 4) reader.error("capacity record: expected 'cap <id> <hub> <upper>'");
        k.kind = ConstraintKind::Capacity;
        k.id = ct[1];
        k.hub_id = ct[2];
        k.upper_bound = parse_int(reader, ct[3], "capacity upper bound");
      } else if (ct[0] == "prop") {
        if (ct.size() != 7)
          reader.error("proportion record: expected 'prop <id> <o> <d> <provider> <pL> <pU>'");
        k.kind = ConstraintKind::Proportion;
        k.id = ct[1];
        k.od_origin = ct[2];
        k.od_destination = ct[3];
        k.provider_id = ct[4];
        k.p_lower = parse_real(reader, ct[5], "p_lower");
        k.p_upper = parse_real(reader, ct[6], "p_upper");
      } else {
        reader.error("unknown constraint kind '" + ct[0] + "'");
      }
      instance.constraints.push_back(std::move(k));
    }
  }

  {
    auto toks = split_tokens(reader.next_line());
    if (toks.size() != 2 || toks[0] != "parcels") reader.error("expected 'parcels <count>'");
    const long long count = parse_int(reader, toks[1], "parcel count");
    if (count < 1) reader.error("m >= 1 required");
    instance.parcels.reserve(static_cast<std::size_t>(count));
    for (long long i = 0; i < count; ++i) {
      auto pt = split_tokens(reader.next_line());
      if (pt.size() < 5) reader.error("parcel record needs id, od, weight, candidate count");
      Parcel p;
      p.id = static_cast<int>(parse_int(reader, pt[0], "parcel id"));
      p.origin = pt[1];
      p.destination = pt[2];
      p.weight = parse_real(reader, pt[3], "weight");
      const long long cand_count = parse_int(reader, pt[4], "candidate count");
      if (cand_count < 1) reader.error("parcel " + pt[0] + ": candidates must be non-empty");
      if (cand_count > instance.n_r_max)
        reader.error("parcel " + pt[0] + ": candidate count " + std::to_string(cand_count) +
                     " exceeds declared n_r " + std::to_string(instance.n_r_max));
      if (static_cast<long long>(pt.size()) != 5 + 2 * cand_count)
        reader.error("parcel " + pt[0] + ": expected " + std::to_string(cand_count) +
                     " (route, cost) pairs");
      for (long long c = 0; c < cand_count; ++c) {
        Candidate cand;
        cand.route_id = pt[5 + 2 * c];
        cand.cost = parse_real(reader, pt[6 + 2 * c], "candidate cost");
        p.candidates.push_back(std::move(cand));
      }
      instance.parcels.push_back(std::move(p));
    }
  }

  if (reader.next_line() != "end") reader.error("expected trailing 'end'");

  try {
    validate(instance);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(origin_name + ": " + e.what());
  }
  return instance;
}

void save_instance(const Instance& instance, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot open '" + path + "' for writing");
  write_instance(instance, out);
  out.flush();
  if (!out) fail("write failed for '" + path + "'");
}

Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open '" + path + "' for reading");
  return read_instance(in, path);
}

}  // namespace opa::model
