// Copyright (c) 2026 The iblkit Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "iblkit/common.hpp"

namespace iblkit {

// Pinhole camera, OpenGL-style axes: camera looks down -z, +x right, +y up.
// cam_to_world is a rigid transform with orthonormal rotation.
struct Camera {
  Mat4<double> cam_to_world = Mat4<double>::Identity();
  double focal_px = 64;
  int width = 64, height = 64;
  double t_near = 0.1, t_far = 10.0;

  Vec3d position() const { return cam_to_world.block<3, 1>(0, 3); }

  Vec3d rotate(const Vec3d& v) const { return cam_to_world.block<3, 3>(0, 0) * v; }

  // Direction through pixel (x, y) at sub-pixel offset (jx, jy) in [0,1).
  Vec3d pixel_direction(int x, int y, double jx = 0.5, double jy = 0.5) const {
    const double px = (double(x) + jx - 0.5 * width) / focal_px;
    const double py = -(double(y) + jy - 0.5 * height) / focal_px;
    return rotate(Vec3d(px, py, -1.0).normalized());
  }

  static Camera look_at(const Vec3d& eye, const Vec3d& target, const Vec3d& up, double focal_px,
                        int width, int height, double t_near, double t_far) {
    Camera cam;
    const Vec3d back = (eye - target).normalized();  // camera +z
    Vec3d right = up.cross(back);
    if (right.norm() < 1e-8) right = Vec3d(1, 0, 0);
    right.normalize();
    const Vec3d cam_up = back.cross(right);
    cam.cam_to_world.setIdentity();
    cam.cam_to_world.block<3, 1>(0, 0) = right;
    cam.cam_to_world.block<3, 1>(0, 1) = cam_up;
    cam.cam_to_world.block<3, 1>(0, 2) = back;
    cam.cam_to_world.block<3, 1>(0, 3) = eye;
    cam.focal_px = focal_px;
    cam.width = width;
    cam.height = height;
    cam.t_near = t_near;
    cam.t_far = t_far;
    return cam;
  }
};

}  // namespace iblkit
