// three.js glue.  Everything here is write-only plumbing driven by a
// FrameModel; decisions about what appears on screen are made upstream in
// view.ts where they can be unit tested without WebGL.

import * as THREE from "three";
import type { ParsedMesh } from "./meshes";
import type { FrameModel, TwinModel } from "./view";
import type { CameraPose } from "./state";

const LINK_LENGTH = 0.35;
const MAX_MARKERS = 64;

interface MarkerNodes {
  group: THREE.Group;
  sphere: THREE.Mesh;
  arrow: THREE.ArrowHelper;
}

/** Schematic joint chain: one segment per joint, bending about axes that
 * alternate between pitch and yaw.  The server never sends link geometry,
 * so this is a readable stand-in that moves 1:1 with the joint vector. */
class TwinChain {
  root = new THREE.Group();
  private joints: THREE.Group[] = [];
  private material: THREE.MeshStandardMaterial;

  constructor(ghost: boolean) {
    this.material = new THREE.MeshStandardMaterial({
      color: ghost ? 0x7fb4ff : 0xffb347,
      transparent: ghost,
      opacity: ghost ? 0.35 : 1.0,
      depthWrite: !ghost,
    });
  }

  setPose(q: number[]): void {
    if (this.joints.length !== q.length) this.rebuild(q.length);
    for (let i = 0; i < q.length; i++) {
      const axis = i % 2 === 0 ? "y" : "z";
      this.joints[i].rotation.set(0, 0, 0);
      this.joints[i].rotation[axis] = q[i];
    }
  }

  private rebuild(dof: number): void {
    this.root.clear();
    this.joints = [];
    let parent: THREE.Object3D = this.root;
    for (let i = 0; i < dof; i++) {
      const joint = new THREE.Group();
      joint.position.z = i === 0 ? 0 : LINK_LENGTH;
      const bone = new THREE.Mesh(
        new THREE.CylinderGeometry(0.03, 0.04, LINK_LENGTH, 12),
        this.material,
      );
      bone.rotation.x = Math.PI / 2; // cylinder y axis onto the z-up link
      bone.position.z = LINK_LENGTH / 2;
      joint.add(bone);
      parent.add(joint);
      this.joints.push(joint);
      parent = joint;
    }
    const tip = new THREE.Mesh(new THREE.SphereGeometry(0.05, 16, 12), this.material);
    tip.position.z = LINK_LENGTH;
    parent.add(tip);
  }
}

export class SceneRenderer {
  private renderer: THREE.WebGLRenderer;
  private scene = new THREE.Scene();
  private camera: THREE.PerspectiveCamera;
  private surface: THREE.Mesh;
  private wire: THREE.LineSegments;
  private markers: MarkerNodes[] = [];
  private twin = new TwinChain(false);
  private echo = new TwinChain(true);

  constructor(canvas: HTMLCanvasElement) {
    this.renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    this.scene.background = new THREE.Color(0x10141a);
    this.camera = new THREE.PerspectiveCamera(60, 1, 0.01, 200);
    this.camera.up.set(0, 0, 1);

    this.scene.add(new THREE.AmbientLight(0xffffff, 0.45));
    const key = new THREE.DirectionalLight(0xffffff, 1.1);
    key.position.set(3, -2, 6);
    this.scene.add(key);
    const fill = new THREE.DirectionalLight(0x8899bb, 0.4);
    fill.position.set(-4, 3, 2);
    this.scene.add(fill);
    this.scene.add(new THREE.AxesHelper(0.5));

    const empty = new THREE.BufferGeometry();
    empty.setAttribute("position", new THREE.BufferAttribute(new Float32Array(0), 3));
    this.surface = new THREE.Mesh(
      empty,
      new THREE.MeshStandardMaterial({
        color: 0x4a6f8a,
        roughness: 0.85,
        side: THREE.DoubleSide,
        polygonOffset: true,
        polygonOffsetFactor: 1,
        polygonOffsetUnits: 1,
      }),
    );
    this.scene.add(this.surface);
    this.wire = new THREE.LineSegments(
      new THREE.EdgesGeometry(this.surface.geometry),
      new THREE.LineBasicMaterial({ color: 0x9fc2d8, transparent: true, opacity: 0.18 }),
    );
    this.scene.add(this.wire);

    this.scene.add(this.twin.root);
    this.scene.add(this.echo.root);

    for (let i = 0; i < MAX_MARKERS; i++) {
      const group = new THREE.Group();
      const sphere = new THREE.Mesh(
        new THREE.SphereGeometry(0.035, 16, 12),
        new THREE.MeshStandardMaterial({ color: 0x47d16c, emissive: 0x123a1c }),
      );
      const arrow = new THREE.ArrowHelper(
        new THREE.Vector3(0, 0, 1),
        new THREE.Vector3(0, 0, 0),
        0.3,
        0xff5252,
        0.08,
        0.04,
      );
      group.add(sphere);
      group.add(arrow);
      group.visible = false;
      this.scene.add(group);
      this.markers.push({ group, sphere, arrow });
    }
  }

  setMesh(parsed: ParsedMesh): void {
    const geo = new THREE.BufferGeometry();
    geo.setAttribute("position", new THREE.BufferAttribute(parsed.positions, 3));
    geo.setIndex(new THREE.BufferAttribute(parsed.indices, 1));
    geo.computeVertexNormals();
    this.surface.geometry.dispose();
    this.surface.geometry = geo;
    this.wire.geometry.dispose();
    this.wire.geometry = new THREE.EdgesGeometry(geo, 30);
  }

  apply(model: FrameModel): void {
    this.applyTwin(this.twin, model.twin);
    this.applyTwin(this.echo, model.echo);
    for (let i = 0; i < this.markers.length; i++) {
      const node = this.markers[i];
      const m = model.markers[i];
      if (m === undefined) {
        node.group.visible = false;
        continue;
      }
      node.group.visible = true;
      node.group.position.set(m.position[0], m.position[1], m.position[2]);
      if (m.arrowDir === null) {
        node.arrow.visible = false;
      } else {
        node.arrow.visible = true;
        node.arrow.setDirection(new THREE.Vector3(m.arrowDir[0], m.arrowDir[1], m.arrowDir[2]));
        node.arrow.setLength(m.arrowLength, 0.08, 0.04);
      }
    }
  }

  private applyTwin(chain: TwinChain, model: TwinModel | null): void {
    chain.root.visible = model !== null;
    if (model !== null) chain.setPose(model.q);
  }

  resize(width: number, height: number): void {
    this.renderer.setSize(width, height, false);
    this.camera.aspect = width / Math.max(1, height);
    this.camera.updateProjectionMatrix();
  }

  render(pose: CameraPose): void {
    this.camera.position.set(pose.position[0], pose.position[1], pose.position[2]);
    const q = pose.quaternion;
    // the fly camera looks along +x at identity; three cameras look along
    // -z with +y up, so append the fixed basis change
    this.camera.quaternion
      .set(q[0], q[1], q[2], q[3])
      .multiply(BASIS_X_FORWARD);
    this.renderer.render(this.scene, this.camera);
  }
}

const BASIS_X_FORWARD = new THREE.Quaternion().setFromEuler(
  new THREE.Euler(Math.PI / 2, 0, -Math.PI / 2, "ZYX"),
);
