import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    testTimeout: 120_000,
    hookTimeout: 70_000,
    // The live-bridge test owns a child process and a real port; keep files
    // sequential so two test files never race for the CPU-heavy server.
    fileParallelism: false,
  },
});
