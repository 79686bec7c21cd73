#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "hepar/stad.hpp"

namespace hepar {

namespace {

// Integer lattice points; all predicates are exact in 64-bit arithmetic for
// grids up to ~10^5 voxels per axis.
struct P {
    std::int64_t x, y, z;
    friend bool operator<(const P& a, const P& b) {
        return a.z != b.z ? a.z < b.z : a.y != b.y ? a.y < b.y : a.x < b.x;
    }
    friend bool operator==(const P&, const P&) = default;
};

P sub(const P& a, const P& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
P cross(const P& a, const P& b) { return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x}; }
std::int64_t dot(const P& a, const P& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

// > 0 when d lies on the side of plane (a, b, c) that (b-a)x(c-a) points to.
std::int64_t orient(const P& a, const P& b, const P& c, const P& d) {
    return dot(cross(sub(b, a), sub(c, a)), sub(d, a));
}

// Indices of four affinely independent points, or fewer if none exist.
std::vector<int> initial_simplex(const std::vector<P>& pts) {
    std::vector<int> s;
    if (pts.empty()) return s;
    s.push_back(0);
    std::int64_t best = 0;
    int pick = -1;
    for (int i = 0; i < int(pts.size()); ++i) {
        const P d = sub(pts[i], pts[0]);
        if (dot(d, d) > best) best = dot(d, d), pick = i;
    }
    if (pick < 0) return s;
    s.push_back(pick);
    best = 0, pick = -1;
    const P e = sub(pts[s[1]], pts[0]);
    for (int i = 0; i < int(pts.size()); ++i) {
        const P c = cross(e, sub(pts[i], pts[0]));
        if (dot(c, c) > best) best = dot(c, c), pick = i;
    }
    if (pick < 0) return s;
    s.push_back(pick);
    best = 0, pick = -1;
    for (int i = 0; i < int(pts.size()); ++i) {
        const std::int64_t o = std::abs(orient(pts[s[0]], pts[s[1]], pts[s[2]], pts[i]));
        if (o > best) best = o, pick = i;
    }
    if (pick >= 0) s.push_back(pick);
    return s;
}

struct Face {
    int v[3];
    P normal;
    std::vector<int> outside;
    bool alive = true;
};

class Quickhull {
public:
    explicit Quickhull(std::vector<P> pts) : pts_(std::move(pts)) {}

    // Six times the hull volume; 0 when the points are coplanar.
    std::int64_t run() {
        const auto s = initial_simplex(pts_);
        if (s.size() < 4) return 0;
        const int a = s[0], b = s[1], c = s[2], d = s[3];
        for (auto [x, y, z, w] : {std::array{a, b, c, d}, std::array{a, b, d, c}, std::array{a, c, d, b},
                                  std::array{b, c, d, a}}) {
            if (orient(pts_[x], pts_[y], pts_[z], pts_[w]) > 0) std::swap(y, z);
            add_face(x, y, z);
        }
        std::vector<int> all;
        for (int i = 0; i < int(pts_.size()); ++i)
            if (i != a && i != b && i != c && i != d) all.push_back(i);
        assign(all, {0, 1, 2, 3});

        std::vector<int> todo{0, 1, 2, 3};
        while (!todo.empty()) {
            const int f = todo.back();
            todo.pop_back();
            if (!faces_[f].alive || faces_[f].outside.empty()) continue;
            for (int nf : expand(f))
                if (!faces_[nf].outside.empty()) todo.push_back(nf);
        }

        std::int64_t six_v = 0;
        for (const auto& f : faces_)
            if (f.alive) six_v += dot(pts_[f.v[0]], cross(pts_[f.v[1]], pts_[f.v[2]]));
        return six_v;
    }

private:
    static std::uint64_t key(int u, int v) { return (std::uint64_t(std::uint32_t(u)) << 32) | std::uint32_t(v); }

    std::int64_t height(const Face& f, int p) const { return dot(f.normal, sub(pts_[p], pts_[f.v[0]])); }

    int add_face(int a, int b, int c) {
        Face f;
        f.v[0] = a, f.v[1] = b, f.v[2] = c;
        f.normal = cross(sub(pts_[b], pts_[a]), sub(pts_[c], pts_[a]));
        faces_.push_back(std::move(f));
        const int id = int(faces_.size()) - 1;
        edges_[key(a, b)] = id;
        edges_[key(b, c)] = id;
        edges_[key(c, a)] = id;
        return id;
    }

    void assign(const std::vector<int>& points, const std::vector<int>& candidates) {
        for (int p : points)
            for (int f : candidates)
                if (height(faces_[f], p) > 0) {
                    faces_[f].outside.push_back(p);
                    break;
                }
    }

    std::vector<int> expand(int f) {
        // Furthest outside point by true distance.
        const Face& face = faces_[f];
        const double inv_len = 1.0 / std::sqrt(double(dot(face.normal, face.normal)));
        int apex = face.outside.front();
        double best = -1.0;
        for (int p : face.outside) {
            const double h = double(height(face, p)) * inv_len;
            if (h > best) best = h, apex = p;
        }

        std::vector<int> visible{f};
        std::vector<char> seen(faces_.size(), 0);
        seen[f] = 1;
        for (std::size_t n = 0; n < visible.size(); ++n) {
            const Face& vf = faces_[visible[n]];
            for (int e = 0; e < 3; ++e) {
                const int g = edges_.at(key(vf.v[(e + 1) % 3], vf.v[e]));
                if (seen[g] != 0) continue;
                seen[g] = height(faces_[g], apex) > 0 ? 1 : 2;
                if (seen[g] == 1) visible.push_back(g);
            }
        }
        std::vector<std::pair<int, int>> horizon;
        std::vector<int> orphans;
        for (int vf : visible) {
            Face& face_v = faces_[vf];
            for (int e = 0; e < 3; ++e) {
                const int u = face_v.v[e], w = face_v.v[(e + 1) % 3];
                if (seen[edges_.at(key(w, u))] != 1) horizon.emplace_back(u, w);
            }
            for (int p : face_v.outside)
                if (p != apex) orphans.push_back(p);
            face_v.outside.clear();
            face_v.alive = false;
        }
        for (int vf : visible)
            for (int e = 0; e < 3; ++e) {
                const auto it = edges_.find(key(faces_[vf].v[e], faces_[vf].v[(e + 1) % 3]));
                if (it != edges_.end() && it->second == vf) edges_.erase(it);
            }
        std::vector<int> created;
        for (const auto& [u, w] : horizon) created.push_back(add_face(u, w, apex));
        assign(orphans, created);
        return created;
    }

    std::vector<P> pts_;
    std::vector<Face> faces_;
    std::unordered_map<std::uint64_t, int> edges_;
};

}  // namespace

double convex_hull_volume(const LabelMask& m) {
    const auto& d = m.dims();
    const Vec3& sp = m.grid().spacing;
    const double voxel = sp[0] * sp[1] * sp[2];
    // Row extremes carry the whole hull: every voxel lies between the first
    // and last foreground voxel of its x-row.
    std::vector<P> centers, corners;
    for (int k = 0; k < d[2]; ++k)
        for (int j = 0; j < d[1]; ++j) {
            int lo = -1, hi = -1;
            for (int i = 0; i < d[0]; ++i)
                if (m(i, j, k)) {
                    if (lo < 0) lo = i;
                    hi = i;
                }
            if (lo < 0) continue;
            centers.push_back({lo, j, k});
            if (hi != lo) centers.push_back({hi, j, k});
            for (int c = 0; c < 4; ++c) {
                const std::int64_t y = j + (c & 1), z = k + (c >> 1);
                corners.push_back({lo, y, z});
                corners.push_back({hi + 1, y, z});
            }
        }
    if (initial_simplex(centers).size() < 4) return double(foreground_count(m)) * voxel;
    std::sort(corners.begin(), corners.end());
    corners.erase(std::unique(corners.begin(), corners.end()), corners.end());
    const std::int64_t six_v = Quickhull(std::move(corners)).run();
    return double(six_v) / 6.0 * voxel;
}

}  // namespace hepar
