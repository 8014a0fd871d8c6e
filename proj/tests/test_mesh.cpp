#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "pmgflow/mesh.hpp"

using namespace pmgflow;

namespace {

int count_tag(const Mesh& m, BoundaryTag t) {
    int c = 0;
    for (const auto& b : m.boundary_faces) c += b.tag == t;
    return c;
}

void expect_closure(const Mesh& m, int p) {
    const ElementGeometry g(m, p);
    const auto& w = basis(p).weights();
    for (std::size_t e = 0; e < m.num_elements(); ++e) {
        double sx = 0, sy = 0;
        for (int f = 0; f < 4; ++f)
            for (int k = 0; k < g.n; ++k) {
                const std::size_t i = (e * 4 + f) * g.n + k;
                EXPECT_NEAR(std::hypot(g.fnx[i], g.fny[i]), 1.0, 1e-13);
                sx += w[k] * g.fnx[i] * g.fsj[i];
                sy += w[k] * g.fny[i] * g.fsj[i];
            }
        EXPECT_NEAR(sx, 0.0, 1e-12);
        EXPECT_NEAR(sy, 0.0, 1e-12);
        for (int k = 0; k < g.np; ++k) EXPECT_GT(g.detj[e * g.np + k], 0.0);
    }
}

void expect_antiparallel(const Mesh& m, int p) {
    const ElementGeometry g(m, p);
    for (const auto& F : m.interior_faces)
        for (int k = 0; k < g.n; ++k) {
            const int kr = F.reversed ? g.n - 1 - k : k;
            const std::size_t a = (F.elem_l * 4 + F.face_l) * g.n + k;
            const std::size_t b = (F.elem_r * 4 + F.face_r) * g.n + kr;
            EXPECT_NEAR(g.fnx[a], -g.fnx[b], 1e-13);
            EXPECT_NEAR(g.fny[a], -g.fny[b], 1e-13);
            EXPECT_NEAR(g.fsj[a], g.fsj[b], 1e-13);
            if (!F.periodic) {
                EXPECT_NEAR(g.fx[a], g.fx[b], 1e-13);
                EXPECT_NEAR(g.fy[a], g.fy[b], 1e-13);
            }
        }
}

const char* kUnitSquare = R"(pmgmesh 1
# one element
nodes 4
0 0
1 0
1 1
0 1
elements 1
0 1 2 3
boundary far-field 4
0 0
0 1
0 2
0 3
)";

}  // namespace

TEST(Box, SingleElement) {
    const Mesh m = generate_box(1, 1, 1.0, 1.0, false);
    EXPECT_EQ(m.num_elements(), 1u);
    EXPECT_EQ(m.boundary_faces.size(), 4u);
    EXPECT_EQ(m.interior_faces.size(), 0u);
}

TEST(Box, TwoElements) {
    const Mesh m = generate_box(2, 1, 2.0, 1.0, false);
    EXPECT_EQ(m.num_elements(), 2u);
    EXPECT_EQ(m.interior_faces.size(), 1u);
    EXPECT_EQ(m.boundary_faces.size(), 6u);
}

TEST(Box, PeriodicFaceCount) {
    const Mesh m = generate_box(4, 4, 1.0, 1.0, true);
    // 16 elements x 4 faces, each face shared by two sides.
    EXPECT_EQ(m.interior_faces.size() + m.boundary_faces.size(), 16u * 4u / 2u);
    EXPECT_EQ(m.boundary_faces.size(), 0u);
    int periodic = 0;
    for (const auto& f : m.interior_faces) periodic += f.periodic;
    EXPECT_EQ(periodic, 8);
}

TEST(Box, PeriodicSingleElementWrapsOntoItself) {
    const Mesh m = generate_box(1, 1, 1.0, 1.0, true);
    EXPECT_EQ(m.interior_faces.size(), 2u);
    EXPECT_EQ(m.neighbor(0, 1), 0);
}

TEST(Box, GeometryInvariants) {
    for (bool per : {false, true}) {
        const Mesh m = generate_box(3, 2, 2.0, 1.5, per, -1.0, 0.5);
        for (int p = 0; p <= 4; ++p) {
            expect_closure(m, p);
            expect_antiparallel(m, p);
        }
    }
}

TEST(Box, HMin) {
    const Mesh m = generate_box(4, 2, 1.0, 1.0, false);
    EXPECT_DOUBLE_EQ(m.h_min(), 0.25);
}

TEST(Cylinder, Counts) {
    const Mesh m = generate_cylinder_omesh(8, 2, 0.5, 2.0, 1.0);
    EXPECT_EQ(m.num_elements(), 16u);
    EXPECT_EQ(count_tag(m, BoundaryTag::WallAdiabatic), 8);
    EXPECT_EQ(count_tag(m, BoundaryTag::FarField), 8);
    EXPECT_EQ(m.interior_faces.size(), (16u * 4u - 16u) / 2u);
}

TEST(Cylinder, UniformSpacing) {
    const double rw = 0.5, rf = 3.5;
    const Mesh m = generate_cylinder_omesh(8, 6, rw, rf, 1.0);
    const auto& a = m.nodes[0];
    const auto& b = m.nodes[8];
    EXPECT_NEAR(std::hypot(b[0], b[1]) - std::hypot(a[0], a[1]), (rf - rw) / 6, 1e-14);
}

TEST(Cylinder, GeometricFirstLayer) {
    const double rw = 0.5, rf = 10.0, s = 1.2;
    const Mesh m = generate_cylinder_omesh(8, 10, rw, rf, s);
    const auto& a = m.nodes[0];
    const auto& b = m.nodes[8];
    const double h1 = std::hypot(b[0], b[1]) - std::hypot(a[0], a[1]);
    EXPECT_NEAR(h1, (rf - rw) * (s - 1.0) / (std::pow(s, 10) - 1.0), 1e-13);
    // Outermost ring lands on r_far.
    const auto& c = m.nodes[10 * 8];
    EXPECT_NEAR(std::hypot(c[0], c[1]), rf, 1e-13);
}

TEST(Cylinder, StretchFromFirstLayer) {
    const double s = stretch_for_first_layer(0.5, 15.0, 20, 0.01);
    EXPECT_NEAR(first_layer_height(0.5, 15.0, 20, s), 0.01, 1e-12);
    EXPECT_THROW(stretch_for_first_layer(0.5, 15.0, 20, 0.0), MeshError);
    EXPECT_THROW(stretch_for_first_layer(0.5, 15.0, 20, -1.0), MeshError);
}

TEST(Cylinder, RejectsBadInput) {
    EXPECT_THROW(generate_cylinder_omesh(7, 2, 0.5, 2.0, 1.0), MeshError);
    EXPECT_THROW(generate_cylinder_omesh(8, 1, 0.5, 2.0, 1.0), MeshError);
    EXPECT_THROW(generate_cylinder_omesh(8, 2, 2.0, 0.5, 1.0), MeshError);
    EXPECT_THROW(generate_cylinder_omesh(8, 2, 0.5, 2.0, 0.9), MeshError);
}

TEST(Cylinder, GeometryInvariants) {
    const Mesh m = generate_cylinder_omesh(16, 5, 0.5, 5.0, 1.3);
    for (int p = 1; p <= 4; ++p) {
        expect_closure(m, p);
        expect_antiparallel(m, p);
    }
    // Wall normals point into the cylinder (out of the fluid).
    const ElementGeometry g(m, 2);
    for (const auto& b : m.boundary_faces) {
        const std::size_t i = (b.elem * 4 + b.face) * g.n + 1;
        const double rdotn = g.fx[i] * g.fnx[i] + g.fy[i] * g.fny[i];
        if (b.tag == BoundaryTag::FarField) {
            EXPECT_GT(rdotn, 0.0);
        } else {
            EXPECT_LT(rdotn, 0.0);
        }
    }
}

TEST(Loader, UnitSquare) {
    std::istringstream in(kUnitSquare);
    const Mesh m = read_mesh(in);
    EXPECT_EQ(m.num_elements(), 1u);
    EXPECT_EQ(m.boundary_faces.size(), 4u);
}

TEST(Loader, InvertedElementNamesElement) {
    std::string s = kUnitSquare;
    s.replace(s.find("0 1 2 3"), 7, "0 3 2 1");
    std::istringstream in(s);
    try {
        read_mesh(in);
        FAIL() << "expected MeshError";
    } catch (const MeshError& e) {
        EXPECT_NE(std::string(e.what()).find("element 0"), std::string::npos) << e.what();
    }
}

TEST(Loader, MissingNodeIsParseErrorWithLine) {
    std::string s = kUnitSquare;
    s.replace(s.find("0 1 2 3"), 7, "0 1 2 9");
    std::istringstream in(s);
    try {
        read_mesh(in);
        FAIL() << "expected MeshError";
    } catch (const MeshError& e) {
        EXPECT_NE(std::string(e.what()).find("line 9"), std::string::npos) << e.what();
    }
}

TEST(Loader, UncoveredFaceRejected) {
    std::string s = kUnitSquare;
    s.replace(s.find("far-field 4"), 11, "far-field 3");
    s.erase(s.rfind("0 3\n"));
    std::istringstream in(s);
    EXPECT_THROW(read_mesh(in), MeshError);
}

TEST(Loader, RoundTripThroughWriter) {
    for (const Mesh& m : {generate_cylinder_omesh(8, 3, 0.5, 3.0, 1.1), generate_box(3, 3, 1.0, 1.0, true)}) {
        std::stringstream ss;
        write_mesh(m, ss);
        const Mesh r = read_mesh(ss);
        ASSERT_EQ(r.num_elements(), m.num_elements());
        EXPECT_EQ(r.interior_faces.size(), m.interior_faces.size());
        EXPECT_EQ(r.boundary_faces.size(), m.boundary_faces.size());
        for (std::size_t i = 0; i < m.nodes.size(); ++i) {
            EXPECT_EQ(r.nodes[i][0], m.nodes[i][0]);
            EXPECT_EQ(r.nodes[i][1], m.nodes[i][1]);
        }
    }
}
