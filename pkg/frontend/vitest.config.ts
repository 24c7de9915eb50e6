import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "happy-dom",
    environmentOptions: {
      // The e2e suite talks to a local service instance; happy-dom
      // enforces the same-origin policy, so the document lives there.
      happyDOM: { url: "http://127.0.0.1:8931" },
    },
    include: ["tests/**/*.test.ts"],
    testTimeout: 30000,
    hookTimeout: 30000,
  },
});
