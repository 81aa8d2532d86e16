import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { Ajv2020, type ValidateFunction } from "ajv/dist/2020.js";

const schemaPath = fileURLToPath(
  new URL("../../src/deskbot/schema/bridge.schema.json", import.meta.url),
);

export const bridgeSchema = JSON.parse(readFileSync(schemaPath, "utf8"));

const ajv = new Ajv2020({ strict: false });
ajv.addSchema(bridgeSchema);

function compileRef(pointer: string): ValidateFunction {
  const validate = ajv.getSchema(`deskbot/bridge.schema.json#/$defs/${pointer}`);
  if (!validate) throw new Error(`schema has no $defs/${pointer}`);
  return validate;
}

/** Validators bound to the shared protocol schema. */
export const validateClient = compileRef("client");
export const validateTelemetry = compileRef("telemetry");
export const validateErr = compileRef("err");

export function isValidServerText(text: string): boolean {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    return false;
  }
  return Boolean(validateTelemetry(doc) || validateErr(doc));
}
