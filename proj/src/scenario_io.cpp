// Copyright 2026 The mfsoc Authors
// SPDX-License-Identifier: Apache-2.0
//
// YAML scenario reader and canonical JSON writer.

#include "mfsoc/scenario.hpp"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mfsoc
{

namespace
{

using nlohmann::json;

[[noreturn]] void fail(const std::string& what)
{
    throw Error(ErrorCode::validation, "scenario", what);
}

double as_double(const YAML::Node& n, const std::string& key)
{
    try
    {
        return n.as<double>();
    }
    catch (const YAML::Exception&)
    {
        fail("'" + key + "' is not a number");
    }
}

bool is_null_value(const YAML::Node& n)
{
    return !n || n.IsNull() || (n.IsScalar() && (n.Scalar() == "null" || n.Scalar() == "~"));
}

// Scalar: s*I for square, broadcast for column vectors. Flat list: vector or
// single row. Nested list: row-major rows.
Mat parse_matrix(const YAML::Node& n, int rows, int cols, const std::string& key)
{
    Mat m = Mat::Zero(rows, cols);
    if (n.IsScalar())
    {
        double s = as_double(n, key);
        if (rows == cols)
            m = s * Mat::Identity(rows, cols);
        else if (cols == 1 || rows == 1)
            m.setConstant(s);
        else
            fail("'" + key + "' needs a " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
        return m;
    }
    if (!n.IsSequence())
        fail("'" + key + "' must be a number or a list");
    bool nested = n.size() > 0 && n[0].IsSequence();
    if (!nested)
    {
        if (static_cast<int>(n.size()) != rows * cols || (rows != 1 && cols != 1))
            fail("'" + key + "' has " + std::to_string(n.size()) + " entries, expected " + std::to_string(rows)
                 + "x" + std::to_string(cols));
        for (std::size_t j = 0; j < n.size(); ++j)
            m(static_cast<Eigen::Index>(rows == 1 ? 0 : j), static_cast<Eigen::Index>(rows == 1 ? j : 0)) =
                as_double(n[j], key);
        return m;
    }
    if (static_cast<int>(n.size()) != rows)
        fail("'" + key + "' has " + std::to_string(n.size()) + " rows, expected " + std::to_string(rows));
    for (int r = 0; r < rows; ++r)
    {
        const YAML::Node row = n[static_cast<std::size_t>(r)];
        if (!row.IsSequence() || static_cast<int>(row.size()) != cols)
            fail("'" + key + "' row " + std::to_string(r) + " must have " + std::to_string(cols) + " entries");
        for (int c = 0; c < cols; ++c)
            m(r, c) = as_double(row[static_cast<std::size_t>(c)], key);
    }
    return m;
}

MatPath parse_path(const YAML::Node& n, int rows, int cols, const std::string& key)
{
    MatPath p(rows, cols);
    if (!n || n.IsNull())
        return p;
    if (n.IsMap())
    {
        if (!n["segments"] || !n["segments"].IsSequence())
            fail("'" + key + "' must be a matrix or {segments: [...]}");
        for (const auto& s : n["segments"])
        {
            Segment seg;
            if (s["from"])
            {
                seg.bounded = true;
                if (!is_null_value(s["from"]))
                    seg.from = as_double(s["from"], key + ".from");
            }
            if (s["until"])
            {
                seg.bounded = true;
                if (!is_null_value(s["until"]))
                    seg.until = as_double(s["until"], key + ".until");
            }
            if (!s["value"])
                fail("'" + key + "' segment without value");
            if (!(seg.from < seg.until))
                fail("'" + key + "' segment has from >= until");
            seg.value = parse_matrix(s["value"], rows, cols, key);
            p.add_segment(std::move(seg));
        }
        return p;
    }
    Segment seg;
    seg.value = parse_matrix(n, rows, cols, key);
    p.add_segment(std::move(seg));
    return p;
}

int as_int(const YAML::Node& root, const char* key, int dflt, bool required)
{
    if (!root[key])
    {
        if (required)
            fail(std::string("missing key '") + key + "'");
        return dflt;
    }
    try
    {
        return root[key].as<int>();
    }
    catch (const YAML::Exception&)
    {
        fail(std::string("'") + key + "' is not an integer");
    }
}

Scenario from_yaml(const YAML::Node& root)
{
    if (!root.IsMap())
        fail("scenario document must be a mapping");
    int K = as_int(root, "K", 1, true);
    int n = as_int(root, "n", 1, true);
    int d = as_int(root, "d", 1, true);
    if (K < 1 || n < 1 || d < 1)
        throw Error(ErrorCode::structure, "scenario", "K, n and d must be positive");
    Scenario sc = Scenario::zeros(K, n, d);
    if (root["name"])
        sc.name = root["name"].as<std::string>();
    if (!root["T"])
        fail("missing key 'T'");
    sc.T = as_double(root["T"], "T");
    if (root["delta"])
        sc.delta = as_double(root["delta"], "delta");
    if (root["theta"])
        sc.theta = as_double(root["theta"], "theta");
    if (root["h"])
        sc.h = as_double(root["h"], "h");
    if (root["pi"])
    {
        sc.pi.clear();
        if (root["pi"].IsScalar())
            sc.pi.push_back(as_double(root["pi"], "pi"));
        else
            for (const auto& v : root["pi"])
                sc.pi.push_back(as_double(v, "pi"));
    }
    const YAML::Node types = root["types"];
    if (!types || !types.IsSequence())
        fail("missing list 'types'");
    if (static_cast<int>(types.size()) != K)
        throw Error(ErrorCode::structure, "scenario",
                    "'types' has " + std::to_string(types.size()) + " entries, expected K = " + std::to_string(K));
    for (int k = 0; k < K; ++k)
    {
        const YAML::Node t = types[static_cast<std::size_t>(k)];
        std::string pre = "types[" + std::to_string(k) + "].";
        sc.A[k] = parse_path(t["A"], n, n, pre + "A");
        sc.Ahat[k] = parse_path(t["Ahat"], n, n, pre + "Ahat");
        sc.R[k] = parse_path(t["R"], d, d, pre + "R");
        sc.Rtilde[k] = parse_path(t["Rtilde"], d, d, pre + "Rtilde");
        const YAML::Node xi = t["xi"];
        if (xi)
        {
            if (xi["mean"])
                sc.xi[k].mean = parse_matrix(xi["mean"], n, 1, pre + "xi.mean").col(0);
            if (xi["cov"])
                sc.xi[k].cov = parse_matrix(xi["cov"], n, n, pre + "xi.cov");
            std::string s = xi["sampler"] ? xi["sampler"].as<std::string>() : "point_mass";
            if (s == "gaussian")
                sc.xi[k].sampler = Sampler::gaussian;
            else if (s == "point_mass")
                sc.xi[k].sampler = Sampler::point_mass;
            else
                fail("unknown sampler '" + s + "'");
        }
    }
    auto shared = [&](const char* key, int r, int c) { return parse_path(root[key], r, c, key); };
    sc.Atilde = shared("Atilde", n, n);
    sc.B = shared("B", n, d);
    sc.Bhat = shared("Bhat", n, d);
    sc.Btilde = shared("Btilde", n, d);
    sc.D = shared("D", n, d);
    sc.Dhat = shared("Dhat", n, d);
    sc.Q = shared("Q", n, n);
    sc.Qtilde = shared("Qtilde", n, n);
    sc.S = shared("S", n, n);
    sc.Stilde = shared("Stilde", n, n);
    if (root["G"])
        sc.G = parse_matrix(root["G"], n, n, "G");
    if (root["Gamma"])
        sc.Gamma = parse_matrix(root["Gamma"], n, n, "Gamma");
    sc.x0 = shared("x0", n, 1);
    sc.u0 = shared("u0", d, 1);
    return sc;
}

json mat_json(const Mat& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
    {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

json path_json(const MatPath& p)
{
    json segs = json::array();
    for (const auto& s : p.segments())
    {
        json j;
        j["value"] = mat_json(s.value);
        if (s.bounded)
        {
            j["from"] = std::isfinite(s.from) ? json(s.from) : json(nullptr);
            j["until"] = std::isfinite(s.until) ? json(s.until) : json(nullptr);
        }
        segs.push_back(j);
    }
    return json{{"segments", segs}};
}

}  // namespace

Scenario parse_scenario(const std::string& text)
{
    YAML::Node root;
    try
    {
        root = YAML::Load(text);
    }
    catch (const YAML::Exception& e)
    {
        throw Error(ErrorCode::io, "scenario", std::string("config parse error: ") + e.what());
    }
    Scenario sc = from_yaml(root);
    check_structure(sc);
    return sc;
}

Scenario load_scenario_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::io, "scenario", "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_scenario(ss.str());
}

std::string canonical_json(const Scenario& sc)
{
    json j;
    j["name"] = sc.name;
    j["K"] = sc.K;
    j["n"] = sc.n;
    j["d"] = sc.d;
    j["T"] = sc.T;
    j["delta"] = sc.delta;
    j["theta"] = sc.theta;
    j["h"] = sc.h;
    j["pi"] = sc.pi;
    json types = json::array();
    for (int k = 0; k < sc.K; ++k)
    {
        json t;
        t["A"] = path_json(sc.A[k]);
        t["Ahat"] = path_json(sc.Ahat[k]);
        t["R"] = path_json(sc.R[k]);
        t["Rtilde"] = path_json(sc.Rtilde[k]);
        t["xi"] = json{{"mean", mat_json(sc.xi[k].mean)},
                       {"cov", mat_json(sc.xi[k].cov)},
                       {"sampler", sc.xi[k].sampler == Sampler::gaussian ? "gaussian" : "point_mass"}};
        types.push_back(t);
    }
    j["types"] = types;
    j["Atilde"] = path_json(sc.Atilde);
    j["B"] = path_json(sc.B);
    j["Bhat"] = path_json(sc.Bhat);
    j["Btilde"] = path_json(sc.Btilde);
    j["D"] = path_json(sc.D);
    j["Dhat"] = path_json(sc.Dhat);
    j["Q"] = path_json(sc.Q);
    j["Qtilde"] = path_json(sc.Qtilde);
    j["S"] = path_json(sc.S);
    j["Stilde"] = path_json(sc.Stilde);
    j["G"] = mat_json(sc.G);
    j["Gamma"] = mat_json(sc.Gamma);
    j["x0"] = path_json(sc.x0);
    j["u0"] = path_json(sc.u0);
    return j.dump();
}

std::string fnv1a_hex(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes)
    {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string scenario_hash(const Scenario& sc)
{
    return fnv1a_hex(canonical_json(sc));
}

}  // namespace mfsoc
