import assert from "node:assert/strict";
import { test } from "node:test";

import { ContactModeFlow, TANGENT_AXES } from "../src/contactMode.js";
import { SequencedClient } from "../src/protocol.js";
import { MockServer } from "./mockServer.js";

test("two-phase flow produces a contact creation with the tangent mask", () => {
  const mock = new MockServer();
  mock.projections.push(
    { point: [1.02, 0.0, 0.01], normal: [1, 0, 0], name: "link2", target: "robot" },
    { point: [1.2, 0.0, -1.1], normal: [0, 0, 1], name: "block", target: "environment" },
  );
  const client = new SequencedClient(mock.transport);
  client.hello();
  const flow = new ContactModeFlow(client);

  flow.begin();
  assert.equal(flow.phase, "pick-robot");
  flow.pointerSample([2.0, 0.0, 0.0]);
  assert.ok(flow.preview); // server round-trip filled the preview
  assert.equal(flow.preview!.name, "link2");
  flow.click(); // fix the robot-side point
  assert.equal(flow.phase, "pick-environment");

  flow.pointerSample([1.2, 0.0, -1.0]);
  assert.equal(flow.preview!.name, "block");
  const created = flow.click();
  assert.ok(created);
  assert.equal(flow.phase, "idle");

  const creation = mock.received.find(
    (m) =>
      m["type"] === "anchor_edit" &&
      (m["payload"] as Record<string, unknown>)["op"] === "create_contact",
  )!;
  const payload = creation["payload"] as Record<string, unknown>;
  assert.equal(payload["body"], "link2");
  assert.deepEqual(payload["robot_normal"], [1, 0, 0]);
  assert.deepEqual(payload["env_normal"], [0, 0, 1]);
  assert.deepEqual(payload["axes"], TANGENT_AXES);
  assert.deepEqual(TANGENT_AXES, [true, true, false, true, true, true]); // yaw free
  assert.deepEqual(mock.violations, []);
});

test("escape cancels mid-flow without emitting a creation", () => {
  const mock = new MockServer();
  mock.projections.push({ point: [1, 0, 0], normal: [1, 0, 0], name: "link2", target: "robot" });
  const client = new SequencedClient(mock.transport);
  client.hello();
  const flow = new ContactModeFlow(client);
  flow.begin();
  flow.pointerSample([2, 0, 0]);
  flow.click();
  flow.cancel(); // escape pressed mid phase two
  assert.equal(flow.phase, "idle");
  const creations = mock.received.filter(
    (m) =>
      m["type"] === "anchor_edit" &&
      (m["payload"] as Record<string, unknown>)["op"] === "create_contact",
  );
  assert.equal(creations.length, 0);
});

test("pointer samples outside an active flow are no-ops", () => {
  const mock = new MockServer();
  const client = new SequencedClient(mock.transport);
  client.hello();
  const flow = new ContactModeFlow(client);
  flow.pointerSample([1, 2, 3]);
  const projections = mock.received.filter((m) => m["type"] === "project_point");
  assert.equal(projections.length, 0);
});
