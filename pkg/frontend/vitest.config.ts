import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    globalSetup: "./test/service.setup.ts",
    testTimeout: 30000,
    hookTimeout: 30000,
  },
});
